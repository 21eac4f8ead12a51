"""Multiple-choice scoring over a question graph and a language vector.

Each candidate gets ``logit_k = head([text_vector(question, candidate_k); graph_vector])``
and the five logits go through a softmax. The head splits its input back into
the text part ``t`` and the graph part ``g`` and computes::

    logit = sum((t A) * (layer_norm(g) B)) + t . w + b

A purely linear head cannot rank candidates here: the graph vector is the same
for all five, so its contribution cancels in the softmax. The low-rank
bilinear term lets the graph decide which candidate text fits it. The language side is a stub that
averages word vectors over ``[CLS] question [SEP] candidate``; anything with
an ``encode(question, candidate) -> ndarray`` method can replace it.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import autodiff as ad
from .amr import AmrGraph, read_penman_file
from .autodiff import Adam, Parameter, Tensor
from .config import ModelConfig
from .embeddings import WordVectors
from .graphs import IntegratedGraph, build_graph, tokenize
from .knowledge import ConceptStore
from .relations import PairPaths, RelationEncoder, RelationVocab, all_pairs_relations, pair_paths
from .transformer import GraphEncoder, GraphEncoderOutput, encode_graph, init_node_embeddings, \
    node_positions, node_word_matrix

__all__ = [
    "LABELS",
    "QaInstance",
    "TextEncoder",
    "MeanEmbeddingEncoder",
    "ModelBundle",
    "Prepared",
    "EpochMetrics",
    "EvalResult",
    "encode_text",
    "prepare",
    "score_candidates",
    "train",
    "evaluate",
    "untrained_accuracy",
    "load_questions",
    "dump_questions",
    "metrics_csv",
    "predictions_csv",
]

log = logging.getLogger("acpgraph.qa")

LABELS = ("a", "b", "c", "d", "e")
CLS, SEP = "[CLS]", "[SEP]"


@dataclass(frozen=True)
class QaInstance:
    id: str
    question: str
    candidates: tuple[tuple[str, str], ...]
    answer_key: str | None
    amr: AmrGraph | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.candidates) != 5:
            raise ValueError(f"{self.id}: expected 5 candidates, got {len(self.candidates)}")
        if self.answer_key is not None and self.answer_key not in [lab for lab, _ in self.candidates]:
            raise ValueError(f"{self.id}: answer key {self.answer_key!r} is not a candidate label")

    @property
    def gold_index(self) -> int:
        return [lab for lab, _ in self.candidates].index(self.answer_key)


def load_questions(jsonl: str, penman: str | None = None) -> list[QaInstance]:
    """Read CommonsenseQA-layout JSON lines, attaching AMRs by ``# ::id``."""
    amrs = {g.id: g for g in read_penman_file(penman)} if penman else {}
    out = []
    for lineno, line in enumerate(jsonl.splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        q = d["question"]
        labels = [c["label"].lower() for c in q["choices"]]
        cands = tuple(zip(labels, (c["text"] for c in q["choices"])))
        key = d.get("answerKey")
        out.append(QaInstance(str(d["id"]), q["stem"], cands, key.lower() if key else None, amrs.get(str(d["id"]))))
    return out


def dump_questions(instances: Iterable[QaInstance]) -> str:
    lines = []
    for inst in instances:
        d = {
            "id": inst.id,
            "question": {"stem": inst.question,
                         "choices": [{"label": lab.upper(), "text": text} for lab, text in inst.candidates]},
        }
        if inst.answer_key is not None:
            d["answerKey"] = inst.answer_key.upper()
        lines.append(json.dumps(d, ensure_ascii=False))
    return "\n".join(lines) + "\n"


class TextEncoder(Protocol):
    dim: int

    def encode(self, question: str, candidate: str) -> np.ndarray: ...


class MeanEmbeddingEncoder:
    """Mean of word vectors over ``[CLS] question [SEP] candidate``.

    ``[CLS]``/``[SEP]`` have their own fixed random vectors. Unknown tokens are
    skipped; if no question or candidate token is known the result is zero.
    """

    def __init__(self, word_vectors: WordVectors, seed: int = 0, cls_vec=None, sep_vec=None):
        self.word_vectors = word_vectors
        rng = np.random.default_rng([seed, 7])
        scale = float(np.sqrt((word_vectors.matrix ** 2).mean())) if len(word_vectors) else 1.0
        self.cls_vec = np.asarray(cls_vec) if cls_vec is not None else rng.normal(0.0, scale, word_vectors.dim)
        self.sep_vec = np.asarray(sep_vec) if sep_vec is not None else rng.normal(0.0, scale, word_vectors.dim)
        self.all_oov = 0

    @property
    def dim(self) -> int:
        return self.word_vectors.dim

    def encode(self, question: str, candidate: str) -> np.ndarray:
        known = [v for v in (self.word_vectors.get(t) for t in tokenize(question) + tokenize(candidate))
                 if v is not None]
        if not known:
            self.all_oov += 1
            log.warning("no known tokens in %r / %r", question, candidate)
            return np.zeros(self.dim)
        return np.mean([self.cls_vec, *known, self.sep_vec], axis=0)


def encode_text(question: str, candidate: str, encoder: TextEncoder) -> np.ndarray:
    if not question.strip():
        raise ValueError("empty question")
    return encoder.encode(question, candidate)


@dataclass
class Prepared:
    """Parameter-free per-instance inputs, computed once and reused every epoch."""

    instance: QaInstance
    graph: IntegratedGraph
    paths: PairPaths
    words: np.ndarray
    positions: np.ndarray
    text: np.ndarray  # (5, text dim)


def question_graph(instance: QaInstance, store: ConceptStore, config: ModelConfig) -> IntegratedGraph:
    kind = config.graph_type
    if kind in ("acp", "acf", "cp") and instance.amr is None:
        raise ValueError(f"{instance.id}: graph type {kind} needs an AMR")
    return build_graph(kind, instance.amr, store, tokenize(instance.question),
                       max_neighbors=config.max_neighbors, hops=config.expand_hops)


def prepare(instance: QaInstance, store: ConceptStore, config: ModelConfig, word_vectors: WordVectors,
            text_encoder: TextEncoder) -> Prepared:
    g = question_graph(instance, store, config)
    if len(g) > config.max_nodes:
        raise ValueError(f"{instance.id}: graph has {len(g)} nodes, max_nodes is {config.max_nodes}")
    text = np.stack([encode_text(instance.question, cand, text_encoder) for _, cand in instance.candidates])
    return Prepared(instance, g, pair_paths(g, config.max_len), node_word_matrix(g, word_vectors),
                    node_positions(g), text)


class ModelBundle:
    """Everything needed to score questions: config, vectors, vocabulary, parameters."""

    def __init__(self, config: ModelConfig, word_vectors: WordVectors, vocab: RelationVocab,
                 text_encoder: TextEncoder | None = None):
        self.config = config
        self.word_vectors = word_vectors
        self.vocab = vocab
        self.text_encoder = text_encoder or MeanEmbeddingEncoder(word_vectors, config.seed)
        rng = np.random.default_rng(config.seed)
        self.relation_encoder = RelationEncoder(vocab, config.relation_embed_dim, config.gru_hidden,
                                                seed=int(rng.integers(2**31)))
        self.graph_encoder = GraphEncoder(config, word_vectors, self.relation_encoder.output_dim, rng)
        t, d, rank = self.text_encoder.dim, config.model_dim, config.classifier_hidden
        self.cls_a = Parameter("cls.text_proj", ad.glorot_uniform(rng, (t, rank)))
        self.cls_b = Parameter("cls.graph_proj", ad.glorot_uniform(rng, (d, rank)))
        self.cls_gamma = Parameter("cls.ln.gamma", np.ones(d))
        self.cls_beta = Parameter("cls.ln.beta", np.zeros(d))
        self.cls_w = Parameter("cls.text_w", ad.glorot_uniform(rng, (t, 1)))
        self.cls_bias = Parameter("cls.bias", np.zeros(1))

    def classifier_parameters(self) -> list[Parameter]:
        return [self.cls_a, self.cls_b, self.cls_gamma, self.cls_beta, self.cls_w, self.cls_bias]

    def parameters(self) -> list[Parameter]:
        return self.relation_encoder.parameters() + self.graph_encoder.parameters() + self.classifier_parameters()

    def named_parameters(self) -> dict[str, Parameter]:
        out = {p.name: p for p in self.parameters()}
        if len(out) != len(self.parameters()):
            raise RuntimeError("parameter names are not unique")
        return out

    def prepare(self, instance: QaInstance, store: ConceptStore) -> Prepared:
        return prepare(instance, store, self.config, self.word_vectors, self.text_encoder)

    def encode(self, prep: Prepared) -> GraphEncoderOutput:
        rel = all_pairs_relations(prep.graph, self.relation_encoder, paths=prep.paths)
        c0 = init_node_embeddings(prep.graph, self.graph_encoder.table, prep.words, prep.positions)
        return encode_graph(prep.graph, rel, self.graph_encoder, c0)

    def logits(self, text: np.ndarray, graph_vector: Tensor) -> Tensor:
        k, d = text.shape[0], graph_vector.shape[0]
        g = ad.broadcast_to(ad.reshape(graph_vector, (1, d)), (k, d))
        return self.classify(ad.concat([ad.tensor(text), g], axis=1))

    def classify(self, x: Tensor) -> Tensor:
        """(K, text_dim + model_dim) concatenated inputs -> (K,) logits."""
        k, t = x.shape[0], self.cls_a.shape[0]
        text, graph = x[:, :t], x[:, t:]
        g = ad.layer_norm(graph, self.cls_gamma, self.cls_beta)
        bilinear = ad.sum((text @ self.cls_a) * (g @ self.cls_b), axis=1)
        linear = ad.reshape(text @ self.cls_w, (k,)) + ad.broadcast_to(self.cls_bias, (k,))
        return bilinear + linear

    def forward(self, prep: Prepared) -> tuple[Tensor, GraphEncoderOutput]:
        out = self.encode(prep)
        return self.logits(prep.text, out.graph_vector), out

    def loss(self, prep: Prepared) -> Tensor:
        logits, _ = self.forward(prep)
        return -ad.log_softmax(logits)[prep.instance.gold_index]

    def probabilities(self, prep: Prepared) -> np.ndarray:
        logits, _ = self.forward(prep)
        return ad.softmax(logits).data

    # -- persistence ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        params = dict(self.named_parameters())
        params["text.word_vectors"] = Parameter("text.word_vectors", self.word_vectors.matrix, trainable=False)
        if isinstance(self.text_encoder, MeanEmbeddingEncoder):
            params["text.cls"] = Parameter("text.cls", self.text_encoder.cls_vec, trainable=False)
            params["text.sep"] = Parameter("text.sep", self.text_encoder.sep_vec, trainable=False)
        meta = {"config": self.config.to_dict(), "relation_vocab": self.vocab.tokens,
                "word_tokens": self.word_vectors.tokens, "format": "acpgraph-model"}
        return ad.save_checkpoint(params, meta)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelBundle":
        params, meta = ad.load_checkpoint(blob)
        if meta.get("format") != "acpgraph-model":
            raise ValueError("checkpoint does not hold a model bundle")
        config = ModelConfig.from_dict(meta["config"])
        vectors = WordVectors(meta["word_tokens"], params.pop("text.word_vectors").data)
        vocab = RelationVocab.loads("\n".join(meta["relation_vocab"]))
        enc = None
        if "text.cls" in params:
            enc = MeanEmbeddingEncoder(vectors, config.seed, params.pop("text.cls").data, params.pop("text.sep").data)
        bundle = cls(config, vectors, vocab, enc)
        mine = bundle.named_parameters()
        if set(mine) != set(params):
            raise ValueError("checkpoint parameters do not match the model layout")
        for name, p in mine.items():
            if p.shape != params[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            p.data[...] = params[name].data
        return bundle


def score_candidates(instance: QaInstance, graph_vector: Tensor, bundle: ModelBundle) -> np.ndarray:
    """Softmax over the five candidate logits."""
    text = np.stack([encode_text(instance.question, cand, bundle.text_encoder) for _, cand in instance.candidates])
    return ad.softmax(bundle.logits(text, graph_vector)).data


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    dev_acc: float


@dataclass
class EvalResult:
    accuracy: float
    predictions: list[tuple[str, str, str | None]]  # (id, predicted, gold)

    def to_csv(self) -> str:
        return predictions_csv(self.predictions)


def predictions_csv(predictions: Sequence[tuple[str, str, str | None]]) -> str:
    """``id,predicted,gold`` with labels upper-cased as in the question files; gold may be empty."""
    rows = ["id,predicted,gold"] + [f"{i},{p.upper()},{(g or '').upper()}" for i, p, g in predictions]
    return "\n".join(rows) + "\n"


def metrics_csv(metrics: Sequence[EpochMetrics]) -> str:
    rows = ["epoch,train_loss,dev_acc"] + [f"{m.epoch},{m.train_loss!r},{m.dev_acc!r}" for m in metrics]
    return "\n".join(rows) + "\n"


def predict(prepared: Sequence[Prepared], bundle: ModelBundle) -> list[tuple[str, str, str | None]]:
    out = []
    for prep in prepared:
        probs = bundle.probabilities(prep)
        inst = prep.instance
        out.append((inst.id, inst.candidates[int(np.argmax(probs))][0], inst.answer_key))
    return out


def evaluate(corpus: Sequence[QaInstance] | Sequence[Prepared], bundle: ModelBundle,
             store: ConceptStore | None = None) -> EvalResult:
    """Accuracy of argmax predictions; ``corpus`` may hold raw or prepared instances."""
    if not corpus:
        raise ValueError("accuracy is undefined on an empty corpus")
    prepared = [c if isinstance(c, Prepared) else bundle.prepare(c, store) for c in corpus]
    for p in prepared:
        if p.instance.answer_key is None:
            raise ValueError(f"{p.instance.id}: evaluation needs an answer key")
    preds = predict(prepared, bundle)
    correct = sum(1 for _, p, g in preds if p == g)
    return EvalResult(correct / len(preds), preds)


def untrained_accuracy(corpus: Sequence[QaInstance], store: ConceptStore, config: ModelConfig,
                       word_vectors: WordVectors, block: int = 1) -> float:
    """Monte-Carlo accuracy of randomly initialized models.

    A single initialization is biased toward some candidate kinds, so every
    ``block`` consecutive instances are scored by a freshly seeded model and
    the result estimates the expectation over initializations.
    """
    if not corpus:
        raise ValueError("accuracy is undefined on an empty corpus")
    text_encoder = MeanEmbeddingEncoder(word_vectors, config.seed)
    prepared = [prepare(i, store, config, word_vectors, text_encoder) for i in corpus]
    vocab = RelationVocab.from_graphs(p.graph for p in prepared)
    correct = 0
    for start in range(0, len(prepared), block):
        seed = int(np.random.default_rng([config.seed, 2, start]).integers(2**31))
        cfg = ModelConfig.from_dict({**config.to_dict(), "seed": seed})
        bundle = ModelBundle(cfg, word_vectors, vocab, text_encoder)
        correct += sum(1 for _, p, g in predict(prepared[start:start + block], bundle) if p == g)
    return correct / len(prepared)


def train(corpus: Sequence[QaInstance], store: ConceptStore, config: ModelConfig, word_vectors: WordVectors,
          dev: Sequence[QaInstance] | None = None, text_encoder: TextEncoder | None = None
          ) -> tuple[ModelBundle, list[EpochMetrics]]:
    """Cross-entropy training with early stopping on dev accuracy.

    Without ``dev`` the training set doubles as the dev set. The returned
    bundle holds the parameters of the best dev epoch.
    """
    missing = [inst.id for inst in corpus if inst.answer_key is None]
    if missing:
        raise ValueError(f"instances without answer_key: {missing[:5]}")
    if not corpus:
        raise ValueError("empty training corpus")
    text_encoder = text_encoder or MeanEmbeddingEncoder(word_vectors, config.seed)
    train_prep = [prepare(i, store, config, word_vectors, text_encoder) for i in corpus]
    dev_prep = [prepare(i, store, config, word_vectors, text_encoder) for i in dev] if dev else train_prep
    vocab = RelationVocab.from_graphs(p.graph for p in train_prep)
    bundle = ModelBundle(config, word_vectors, vocab, text_encoder)
    params = bundle.parameters()
    opt = Adam(params, config.learning_rate) if config.optimizer == "adam" else None
    rng = np.random.default_rng([config.seed, 1])
    metrics: list[EpochMetrics] = []
    best_acc, best_state, stale = -1.0, None, 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_prep))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_prep[k] for k in order[start:start + config.batch_size]]
            for prep in batch:
                loss = bundle.loss(prep)
                total += loss.item()
                ad.scale(loss, 1.0 / len(batch)).backward()
            if opt is not None:
                opt.step()
            else:
                ad.sgd_step(params, config.learning_rate)
        dev_acc = evaluate(dev_prep, bundle).accuracy
        metrics.append(EpochMetrics(epoch, total / len(train_prep), dev_acc))
        log.info("epoch %d loss %.4f dev_acc %.4f", epoch, metrics[-1].train_loss, dev_acc)
        if dev_acc > best_acc:
            best_acc, stale = dev_acc, 0
            best_state = {p.name: p.data.copy() for p in params}
        else:
            stale += 1
        if config.target_dev_accuracy is not None and dev_acc >= config.target_dev_accuracy:
            break
        if stale >= config.patience:
            break
    if best_state is not None:
        for p in params:
            p.data[...] = best_state[p.name]
    return bundle, metrics
