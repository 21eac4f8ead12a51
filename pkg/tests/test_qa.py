import json

import numpy as np
import pytest

from acpgraph import autodiff as ad
from acpgraph.config import ModelConfig
from acpgraph.embeddings import WordVectors
from acpgraph.fileio import data_path, read_text
from acpgraph.qa import (
    MeanEmbeddingEncoder,
    ModelBundle,
    QaInstance,
    dump_questions,
    encode_text,
    evaluate,
    load_questions,
    metrics_csv,
    predictions_csv,
    train,
    untrained_accuracy,
)
from acpgraph.relations import RelationVocab
from acpgraph.synthetic import build_synthetic_corpus

TINY = dict(model_dim=8, heads=2, relation_layers=1, vanilla_layers=1, ffn_dim=8, gru_hidden=4,
            relation_embed_dim=4, classifier_hidden=4, epochs=2, batch_size=4)


@pytest.fixture(scope="module")
def corpus():
    return build_synthetic_corpus(seed=3, n=20, dim=8)


def test_load_and_dump_questions(home_equipment_amr):
    jsonl = read_text(data_path("home_equipment_questions.jsonl"))
    (q,) = load_questions(jsonl, read_text(data_path("home_equipment.penman")))
    assert q.answer_key == "d" and q.candidates[3] == ("d", "television")
    assert q.amr is not None and q.amr.root == home_equipment_amr.root
    again = load_questions(dump_questions([q]))
    assert again == [q]
    assert json.loads(dump_questions([q]))["answerKey"] == "D"


def test_instance_validation():
    cands = tuple(zip("abcde", "vwxyz"))
    with pytest.raises(ValueError):
        QaInstance("x", "q?", cands[:4], "a")
    with pytest.raises(ValueError):
        QaInstance("x", "q?", cands, "f")
    assert QaInstance("x", "q?", cands, None).answer_key is None


def test_text_encoder():
    wv = WordVectors(["cat", "sat"], np.array([[1.0, 0.0], [0.0, 1.0]]))
    enc = MeanEmbeddingEncoder(wv, cls_vec=np.zeros(2), sep_vec=np.zeros(2))
    np.testing.assert_allclose(enc.encode("The cat", "sat"), [0.25, 0.25])
    np.testing.assert_array_equal(enc.encode("zzz", "yyy"), [0, 0])
    assert enc.all_oov == 1
    with pytest.raises(ValueError):
        encode_text("  ", "cat", enc)


def test_bundle_round_trip(corpus):
    cfg = ModelConfig(**TINY)
    bundle, _ = train(corpus.instances[:8], corpus.store, cfg, corpus.vectors)
    again = ModelBundle.from_bytes(bundle.to_bytes())
    for inst in corpus.instances[8:12]:
        pa = bundle.probabilities(bundle.prepare(inst, corpus.store))
        pb = again.probabilities(again.prepare(inst, corpus.store))
        assert np.array_equal(pa, pb)
    assert again.to_bytes() == bundle.to_bytes()
    with pytest.raises(ValueError):
        ModelBundle.from_bytes(ad.save_checkpoint({"x": ad.Parameter("x", np.zeros(1))}))


def test_training_is_deterministic(corpus):
    cfg = ModelConfig(**TINY)
    a, ma = train(corpus.instances[:8], corpus.store, cfg, corpus.vectors, dev=corpus.instances[8:12])
    b, mb = train(corpus.instances[:8], corpus.store, cfg, corpus.vectors, dev=corpus.instances[8:12])
    assert metrics_csv(ma) == metrics_csv(mb)
    assert a.to_bytes() == b.to_bytes()
    assert [m.epoch for m in ma] == [1, 2]


def test_zero_learning_rate_leaves_parameters_unchanged(corpus):
    cfg = ModelConfig(**{**TINY, "learning_rate": 0.0, "optimizer": "sgd"})
    bundle, _ = train(corpus.instances[:4], corpus.store, cfg, corpus.vectors)
    fresh = ModelBundle(cfg, corpus.vectors, bundle.vocab)
    for name, p in fresh.named_parameters().items():
        assert np.array_equal(p.data, bundle.named_parameters()[name].data), name


def test_training_rejects_unlabeled(corpus):
    inst = corpus.instances[0]
    unlabeled = QaInstance(inst.id, inst.question, inst.candidates, None, inst.amr)
    with pytest.raises(ValueError):
        train([unlabeled], corpus.store, ModelConfig(**TINY), corpus.vectors)
    with pytest.raises(ValueError):
        train([], corpus.store, ModelConfig(**TINY), corpus.vectors)


def test_identical_candidates_get_uniform_probabilities(corpus):
    cfg = ModelConfig(**TINY)
    inst = corpus.instances[0]
    same = QaInstance("same", inst.question, tuple((lab, "sea") for lab in "abcde"), "a", inst.amr)
    bundle = ModelBundle(cfg, corpus.vectors, RelationVocab())
    probs = bundle.probabilities(bundle.prepare(same, corpus.store))
    np.testing.assert_allclose(probs, 0.2, atol=1e-12)


def test_evaluate_errors_and_csv(corpus):
    bundle = ModelBundle(ModelConfig(**TINY), corpus.vectors, RelationVocab())
    with pytest.raises(ValueError):
        evaluate([], bundle)
    res = evaluate(corpus.instances[:3], bundle, corpus.store)
    lines = res.to_csv().splitlines()
    assert lines[0] == "id,predicted,gold" and len(lines) == 4
    assert predictions_csv([("q", "b", None)]) == "id,predicted,gold\nq,B,\n"


def test_untrained_baseline_is_chance():
    big = build_synthetic_corpus(seed=11, n=1000)
    acc = untrained_accuracy(big.instances, big.store, ModelConfig(), big.vectors)
    assert abs(acc - 0.2) <= 0.05, acc


def test_end_to_end_gradients(corpus):
    cfg = ModelConfig(**{**TINY, "model_dim": 4, "ffn_dim": 4, "gru_hidden": 2, "relation_embed_dim": 2})
    wv = WordVectors(corpus.vectors.tokens, corpus.vectors.matrix[:, :4])
    bundle = ModelBundle(cfg, wv, RelationVocab())
    prepared = [bundle.prepare(i, corpus.store) for i in corpus.instances[:2]]
    bundle = ModelBundle(cfg, wv, RelationVocab.from_graphs(p.graph for p in prepared))

    def loss():
        return ad.scale(ad.add(bundle.loss(prepared[0]), bundle.loss(prepared[1])), 0.5)

    rep = ad.grad_check(loss, bundle.parameters())
    assert rep.passed and rep.max_error < 1e-4, str(rep)
