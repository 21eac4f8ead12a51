import numpy as np
import pytest

from acpgraph import autodiff as ad
from acpgraph.config import ModelConfig
from acpgraph.embeddings import WordVectors
from acpgraph.graphs import GEdge, GNode, IntegratedGraph
from acpgraph.relations import RelationEncoder, RelationVocab, all_pairs_relations, split_relation
from acpgraph.transformer import (
    AttentionParams,
    GraphEncoder,
    NodeEmbeddingTable,
    attention_layer,
    encode_graph,
    init_node_embeddings,
    node_positions,
    relation_attention_scores,
    relation_scores,
    vanilla_scores,
)


def four_terms(c, rf, rb, wq, wk, scale):
    """Explicit content + source bias + target bias + universal bias expansion."""
    m = wq @ wk.T
    content = c @ m @ c.T
    source = np.einsum("id,de,ije->ij", c, m, rb)
    target = np.einsum("ijd,de,je->ij", rf, m, c)
    universal = np.einsum("ijd,de,ije->ij", rf, m, rb)
    return (content + source + target + universal) * scale


def test_factored_form_matches_four_term_expansion():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n, d, heads = int(rng.integers(1, 7)), 8, int(rng.choice([1, 2, 4]))
        hd = d // heads
        c, rf, rb = rng.normal(size=(n, d)), rng.normal(size=(n, n, d)), rng.normal(size=(n, n, d))
        wq, wk = rng.normal(size=(d, d)), rng.normal(size=(d, d))
        s = relation_scores(ad.tensor(c), ad.tensor(rf), ad.tensor(rb), ad.tensor(wq), ad.tensor(wk), heads).data
        for h in range(heads):
            cols = slice(h * hd, (h + 1) * hd)
            ref = four_terms(c, rf, rb, wq[:, cols], wk[:, cols], 1 / np.sqrt(hd))
            np.testing.assert_allclose(s[h], ref, rtol=0, atol=1e-9 * max(1.0, np.abs(ref).max()))


def test_zero_relations_reduce_to_vanilla_exactly():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n, d = int(rng.integers(1, 6)), 8
        c, wq, wk = (ad.tensor(rng.normal(size=s)) for s in ((n, d), (d, d), (d, d)))
        z = ad.tensor(np.zeros((n, n, d)))
        for scale in (True, False):
            a = relation_scores(c, z, z, wq, wk, 2, scale).data
            b = vanilla_scores(c, wq, wk, 2, scale).data
            assert np.array_equal(a, b)
            # against plain numpy too
            q, k = (c.data @ wq.data).reshape(n, 2, 4), (c.data @ wk.data).reshape(n, 2, 4)
            ref = np.einsum("ihd,jhd->hij", q, k) / (np.sqrt(4) if scale else 1)
            np.testing.assert_allclose(b, ref, atol=1e-12)


def test_rows_are_stochastic():
    rng = np.random.default_rng(2)
    params = AttentionParams("t", 8, 2, 16, rng, relation_dim=6)
    for n in (1, 3, 7):
        c = ad.tensor(rng.normal(size=(n, 8)))
        rel = ad.tensor(rng.normal(size=(n, n, 6)) * 3)
        out, att = attention_layer(c, rel, params)
        assert out.shape == (n, 8) and att.shape == (2, n, n)
        assert (att >= 0).all()
        np.testing.assert_allclose(att.sum(-1), 1.0, atol=1e-9)
        rf, rb = split_relation(rel, params.w_r)
        one = relation_attention_scores(c, rf, rb, params, head=1).data
        np.testing.assert_allclose(one, att[1], atol=1e-12)


def test_score_errors():
    c = ad.tensor(np.ones((3, 4)))
    with pytest.raises(ad.ShapeError):
        relation_scores(c, ad.tensor(np.ones((2, 3, 4))), ad.tensor(np.ones((3, 3, 4))),
                        ad.tensor(np.eye(4)), ad.tensor(np.eye(4)), 1)
    params = AttentionParams("t", 4, 1, 4, np.random.default_rng(0), relation_dim=2)
    with pytest.raises(ad.ShapeError):
        attention_layer(c, ad.tensor(np.ones((2, 2, 2))), params)
    with pytest.raises(ValueError):
        AttentionParams("t", 6, 4, 4, np.random.default_rng(0))


def test_zero_projections_leave_layer_normed_residual():
    rng = np.random.default_rng(3)
    params = AttentionParams("t", 8, 2, 16, rng, relation_dim=4)
    for p in (params.wo, params.w2, params.b2):
        p.data[:] = 0.0
    c = rng.normal(size=(5, 8))
    out, _ = attention_layer(ad.tensor(c), ad.tensor(rng.normal(size=(5, 5, 4))), params)
    ln = lambda x: (x - x.mean(1, keepdims=True)) / np.sqrt(x.var(1, keepdims=True) + 1e-5)  # noqa: E731
    np.testing.assert_allclose(out.data, ln(ln(c)), atol=1e-10)


def test_attention_layer_gradients():
    rng = np.random.default_rng(4)
    params = AttentionParams("t", 4, 2, 6, rng, relation_dim=3)
    c = ad.Parameter("c", rng.normal(size=(3, 4)))
    rel = ad.Parameter("rel", rng.normal(size=(3, 3, 3)))
    w = rng.normal(size=(3, 4))

    def loss():
        out, _ = attention_layer(c, rel, params)
        return ad.sum(out * ad.tensor(w))

    rep = ad.grad_check(loss, params.parameters() + [c, rel])
    assert rep.passed and rep.max_error < 1e-4, str(rep)


def small_setup(n_nodes=5, seed=0, dim=8):
    rng = np.random.default_rng(seed)
    words = [f"w{k}" for k in range(n_nodes)]
    wv = WordVectors(words, rng.normal(size=(n_nodes, dim)))
    nodes = tuple(GNode(f"n{k}", w, "amr") for k, w in enumerate(words))
    edges = tuple(GEdge(f"n{k}", f"n{k + 1}", "r" if k % 2 else "s", "amr") for k in range(n_nodes - 1))
    graph = IntegratedGraph(nodes, edges, "n0")
    cfg = ModelConfig(model_dim=dim, heads=2, relation_layers=2, vanilla_layers=1, ffn_dim=8, gru_hidden=3,
                      relation_embed_dim=4, max_nodes=8)
    vocab = RelationVocab.from_graphs([graph])
    renc = RelationEncoder(vocab, cfg.relation_embed_dim, cfg.gru_hidden, seed=seed)
    genc = GraphEncoder(cfg, wv, renc.output_dim, np.random.default_rng(seed + 1))
    return graph, wv, renc, genc


def test_encode_graph_shapes_and_pooling():
    graph, _, renc, genc = small_setup()
    out = encode_graph(graph, all_pairs_relations(graph, renc), genc)
    assert out.attention_maps.shape == (3, 2, 5, 5)
    assert out.node_states.shape == (5, 8)
    np.testing.assert_allclose(out.graph_vector.data, out.node_states.data.sum(0))
    np.testing.assert_allclose(out.attention_maps.sum(-1), 1.0, atol=1e-9)
    np.testing.assert_array_equal(out.aggregated_attention(), out.attention_maps[1].mean(0))
    np.testing.assert_array_equal(out.aggregated_attention(layer=2, heads="max"), out.attention_maps[2].max(0))
    np.testing.assert_array_equal(out.aggregated_attention(layer=0, heads="1"), out.attention_maps[0, 1])


def test_single_node_graph():
    _, wv, renc, genc = small_setup()
    g = IntegratedGraph((GNode("a", "w1", "amr"),), (), "a")
    out = encode_graph(g, all_pairs_relations(g, renc), genc)
    np.testing.assert_array_equal(out.graph_vector.data, out.node_states.data[0])
    assert out.attention_maps.shape == (3, 2, 1, 1)
    np.testing.assert_array_equal(out.attention_maps, 1.0)
    c0 = init_node_embeddings(g, genc.table).data
    np.testing.assert_array_equal(c0[0], wv.lookup("w1") + genc.table.position.data[0])


def test_permuting_node_storage_keeps_graph_vector():
    graph, _, renc, genc = small_setup(6, seed=2)
    perm = np.random.default_rng(0).permutation(len(graph))
    shuffled = IntegratedGraph(tuple(graph.nodes[k] for k in perm), graph.edges[::-1], graph.root)
    a = encode_graph(graph, all_pairs_relations(graph, renc), genc)
    b = encode_graph(shuffled, all_pairs_relations(shuffled, renc), genc)
    np.testing.assert_allclose(a.graph_vector.data, b.graph_vector.data, atol=1e-10)
    np.testing.assert_allclose(a.node_states.data[perm], b.node_states.data, atol=1e-10)
    ca, cb = init_node_embeddings(graph, genc.table).data, init_node_embeddings(shuffled, genc.table).data
    np.testing.assert_array_equal(ca[perm], cb)


def test_node_positions_follow_bfs_with_id_ties():
    nodes = tuple(GNode(k, k, "amr") for k in ("z", "b", "a", "r"))
    edges = (GEdge("r", "z", "x", "amr"), GEdge("a", "r", "x", "amr"), GEdge("b", "a", "x", "amr"))
    g = IntegratedGraph(nodes, edges, "r")
    assert g.bfs_order() == ["r", "a", "z", "b"]
    assert node_positions(g).tolist() == [2, 3, 1, 0]


def test_embedding_table_rules():
    rng = np.random.default_rng(0)
    wv = WordVectors(["a", "b"], np.zeros((2, 4)))
    table = NodeEmbeddingTable(wv, 3, 4, rng)
    g = IntegratedGraph((GNode("x", "a", "amr"), GNode("y", "zzz", "amr")), (GEdge("x", "y", "r", "amr"),), "x")
    np.testing.assert_array_equal(init_node_embeddings(g, table).data, table.position.data[:2])
    assert wv.oov_hits == 1
    big = IntegratedGraph(tuple(GNode(f"n{k}", "a", "amr") for k in range(4)), (), "n0")
    with pytest.raises(ValueError, match="3"):
        init_node_embeddings(big, table)
    with pytest.raises(ValueError):
        NodeEmbeddingTable(wv, 3, 5, rng)


def test_encode_graph_gradients():
    graph, _, renc, genc = small_setup(5, seed=5, dim=4)
    w = np.random.default_rng(1).normal(size=4)

    def loss():
        out = encode_graph(graph, all_pairs_relations(graph, renc), genc)
        return ad.sum(out.graph_vector * ad.tensor(w))

    rep = ad.grad_check(loss, renc.parameters() + genc.parameters())
    assert rep.passed and rep.max_error < 1e-4, str(rep)


def test_encoder_is_deterministic():
    g1, _, r1, e1 = small_setup(seed=7)
    g2, _, r2, e2 = small_setup(seed=7)
    a = encode_graph(g1, all_pairs_relations(g1, r1), e1)
    b = encode_graph(g2, all_pairs_relations(g2, r2), e2)
    assert np.array_equal(a.graph_vector.data, b.graph_vector.data)
    assert np.array_equal(a.attention_maps, b.attention_maps)
