"""
Learning from a planted path
============================

Each synthetic question can only be answered by following one ConceptNet
edge from the subject to the gold location. Train the default model on 200
questions and score 50 held-out ones.
"""

# %%
import time

from acpgraph.config import ModelConfig
from acpgraph.qa import evaluate, train, untrained_accuracy
from acpgraph.synthetic import build_synthetic_corpus

syn = build_synthetic_corpus(seed=0, n=300)
train_set, dev_set, test_set = syn.split(200, 50, 50)
q = test_set[0]
print(q.question, [c for _, c in q.candidates], "gold:", q.answer_key)

# %%
# Randomly initialized models sit at chance.
big = build_synthetic_corpus(seed=1, n=1000)
print("untrained accuracy", untrained_accuracy(big.instances, big.store, ModelConfig(), big.vectors))

# %%
# Early stopping watches dev accuracy; the best epoch's weights are kept.
start = time.perf_counter()
bundle, metrics = train(train_set, syn.store, ModelConfig(), syn.vectors, dev=dev_set)
for m in metrics[:: max(1, len(metrics) // 8)]:
    print(f"epoch {m.epoch:3d}  loss {m.train_loss:.4f}  dev {m.dev_acc:.3f}")
print(f"trained in {time.perf_counter() - start:.1f}s")
print("held-out accuracy", evaluate(test_set, bundle, syn.store).accuracy)
