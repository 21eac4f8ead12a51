"""
Reading AMR graphs and counting their roles
===========================================

Parse a few PENMAN strings, look at what the parser keeps, write the graphs
back out, and tabulate how often each role occurs.
"""

# %%
# A question graph. ``:ARG0-of`` is an inverse role, so the parser stores the
# edge the other way round; constants such as ``-`` become leaf nodes.
from acpgraph.amr import corpus_role_stats, parse_penman, read_penman_file, serialize_penman
from acpgraph.cli import format_stats_table
from acpgraph.fileio import data_path, read_text

g = parse_penman("(b / blowfish :ARG0-of (l / live-01 :polarity -))")
for n in g.nodes:
    print(n.id, n.concept, "frame" if n.is_frame else "", "attribute" if n.is_attribute else "")
for e in g.edges:
    print(e.source, e.label, e.target)

# %%
# Serialization picks the root and re-inverts edges as needed.
print(serialize_penman(g))

# %%
# Role frequencies over the bundled fixture corpus, in the two-column layout
# used for ARG0/ARG1 tables. Several corpora give several columns.
corpus = list(read_penman_file(read_text(data_path("amr_corpus.penman"))))
half = len(corpus) // 2
columns = [("first_half", corpus_role_stats(corpus[:half])), ("second_half", corpus_role_stats(corpus[half:]))]
print(format_stats_table(columns, [":ARG0", ":ARG1", ":ARG2", ":mod"]))
