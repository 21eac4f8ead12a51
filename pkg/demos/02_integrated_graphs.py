"""
Four ways to attach ConceptNet to a question
============================================

The home-entertainment question from the bundled fixture, expanded with a
six-assertion store into ACF, ACP, CF and CP graphs.
"""

# %%
from acpgraph.fileio import data_path, read_text
from acpgraph.graphs import build_acf, build_acp, build_cf, build_cp, to_levi, tokenize
from acpgraph.knowledge import ingest_csv
from acpgraph.amr import read_penman_records

(amr, meta), = read_penman_records(read_text(data_path("home_equipment.penman")))
with open(data_path("home_equipment_conceptnet.tsv"), encoding="utf-8") as fh:
    store = ingest_csv(fh)
print(meta["snt"])
print(len(store), "assertions")

# %%
# ACF expands every AMR concept. ACP only expands non-frame concepts that sit
# on an ARG0/ARG1 edge, so ``home``, ``entertainment`` and the frame
# ``require-01`` lose their neighbors.
acf, acp = build_acf(amr, store), build_acp(amr, store)
cn = lambda g: sorted(n.label for n in g.nodes if n.origin == "conceptnet")
print("ACF:", cn(acf))
print("ACP:", cn(acp))
print("pruned:", sorted(set(cn(acf)) - set(cn(acp))))

# %%
# The token graphs hang question tokens off a synthetic root instead.
tokens = tokenize(meta["snt"])
cf, cp = build_cf(tokens, store), build_cp(tokens, amr, store)
print("CF:", cn(cf))
print("CP:", cn(cp))

# %%
# The Levi form turns each labeled edge into its own node.
levi = to_levi(acp)
print(len(acp.nodes), "concepts +", len(acp.edges), "edges ->", len(levi.nodes), "Levi nodes")
for node in levi.nodes[:12]:
    print("  relation" if node.is_relation else "  concept ", node.id)
