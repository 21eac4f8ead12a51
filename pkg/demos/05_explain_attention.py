"""
Which concept pairs does the model look at?
===========================================

Train on the planted corpus, then list the most attended concept pairs of a
correctly answered held-out question with the relation path between them,
and export the heatmap as CSV/JSON.
"""

# %%
import sys
import tempfile

from acpgraph.config import ModelConfig
from acpgraph.interpret import export_heatmap, top_paths
from acpgraph.qa import train
from acpgraph.synthetic import build_synthetic_corpus

syn = build_synthetic_corpus(seed=0, n=300)
train_set, dev_set, test_set = syn.split(200, 50, 50)
bundle, _ = train(train_set, syn.store, ModelConfig(), syn.vectors, dev=dev_set)

# %%
for inst in test_set:
    prep = bundle.prepare(inst, syn.store)
    logits, out = bundle.forward(prep)
    if logits.data.argmax() == inst.gold_index:
        break
print(inst.question, "->", inst.candidates[int(logits.data.argmax())][1], "(gold", inst.candidates[inst.gold_index][1] + ")")
print("planted pair", syn.planted[inst.id])
for p in top_paths(out, prep.graph, 5):
    print(f"{p.attention:.3f}  {' '.join(p.path)}")

# %%
# Attention of the last relation layer, averaged over heads, one row per node.
out_dir = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="acpgraph-")
csv_path, json_path = export_heatmap(out, prep.graph, out_dir, k=5)
print(open(csv_path).read().splitlines()[0])
print("wrote", csv_path, "and", json_path)
