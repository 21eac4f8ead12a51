"""
Relation paths and relation-aware attention
===========================================

Shortest label paths between concepts, their GRU encoding, and how the
encoding biases attention scores.
"""

# %%
import numpy as np

from acpgraph import autodiff as ad
from acpgraph.amr import parse_penman
from acpgraph.graphs import build_acf, to_levi
from acpgraph.knowledge import Assertion, ConceptStore
from acpgraph.relations import RelationEncoder, RelationVocab, all_pairs_relations, shortest_path
from acpgraph.transformer import relation_scores, vanilla_scores

amr = parse_penman("(r / require-01 :ARG0 (b / blowfish) :purpose (l / live-01 :ARG0 b))")
store = ConceptStore.from_assertions([Assertion("blowfish", "AtLocation", "sea")])
g = build_acf(amr, store)
levi = to_levi(g)

# %%
# Paths are found on the Levi graph with arcs usable both ways; each step
# records whether it followed or opposed the arc.
for i, j in [("r", "cn/sea"), ("cn/sea", "l"), ("b", "b")]:
    print(i, "->", j, shortest_path(levi, i, j).tokens())

# %%
# Every ordered pair gets a vector of size 2 * hidden.
enc = RelationEncoder(RelationVocab.from_graphs([g]), embed_dim=8, hidden=4, seed=0)
rel = all_pairs_relations(g, enc)
print("relation tensor", rel.shape)

# %%
# Scores with relation biases, and the same scores with the biases zeroed,
# which is exactly plain dot-product attention.
rng = np.random.default_rng(0)
n, d = len(g), 8
c = ad.tensor(rng.normal(size=(n, d)))
wq, wk = ad.tensor(rng.normal(size=(d, d))), ad.tensor(rng.normal(size=(d, d)))
w_r = ad.tensor(rng.normal(size=(rel.shape[-1], 2 * d)))
proj = rel @ w_r
biased = relation_scores(c, proj[..., :d], proj[..., d:], wq, wk, heads=2)
zero = ad.tensor(np.zeros((n, n, d)))
plain = relation_scores(c, zero, zero, wq, wk, heads=2)
print("max relation effect", float(np.abs(biased.data - plain.data).max()))
print("zero bias equals vanilla:", np.array_equal(plain.data, vanilla_scores(c, wq, wk, heads=2).data))
