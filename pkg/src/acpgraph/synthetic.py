"""Planted-path question corpus for desk-scale training.

Every question asks where some creature is found. The gold answer is linked
to the creature by ``AtLocation`` in the store, and the creature is an
``ARG0``/``ARG1`` argument of the question AMR, so the link survives ACP
pruning. Distractors come in four kinds:

* hard: linked to the creature by some other relation (kept by ACP),
* modifier: ``AtLocation`` of the creature's ``:mod`` adjective (pruned, not an ARG endpoint),
* frame: linked to the question's frame concept, e.g. ``live`` (pruned, frame node),
* absent: not in the store at all.

Creature names are fresh pseudo-words per question, so held-out questions
cannot be answered by memorizing creatures seen in training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .amr import parse_penman
from .embeddings import WordVectors
from .graphs import build_acp, tokenize
from .knowledge import Assertion, ConceptStore, normalize_concept
from .qa import LABELS, QaInstance

__all__ = ["SyntheticCorpus", "build_synthetic_corpus", "PLANTED_RELATION"]

PLANTED_RELATION = "AtLocation"

LOCATIONS = (
    "sea", "ocean", "river", "lake", "desert", "forest", "jungle", "mountain", "cave", "swamp",
    "meadow", "farm", "zoo", "arctic", "savanna", "reef", "pond", "garden", "city", "island",
    "tundra", "canyon", "valley", "marsh", "beach",
)
MODIFIERS = ("wild", "small", "young", "hungry", "tiny", "old", "spotted", "striped", "sleepy", "giant")
CATEGORIES = ("fish", "bird", "mammal", "reptile", "insect")
HARD_RELATIONS = ("RelatedTo", "Desires", "DistinctFrom")
FRAME_WORDS = {
    "live": ("home", "nest", "shelter"),
    "require": ("need", "want"),
    "find": ("map", "search"),
}
_SYLLABLES = ("ba", "ko", "ri", "zu", "me", "ta", "lo", "ne", "vi", "sa", "du", "po", "ga", "fe", "xi", "mu")

TEMPLATES = (
    ("Where does the {mod} {subj} live?", "live",
     "(l / live-01 :ARG0 (s / {subj} :mod (m / {mod})) :location (a / amr-unknown))"),
    ("What does the {mod} {subj} require to live?", "require",
     "(r / require-01 :ARG0 (s / {subj} :mod (m / {mod})) :ARG1 (a / amr-unknown)"
     " :purpose (l / live-01 :ARG0 s))"),
    ("Where can you find a {mod} {subj}?", "find",
     "(p / possible-01 :ARG1 (f / find-01 :ARG0 (y / you) :ARG1 (s / {subj} :mod (m / {mod}))"
     " :location (a / amr-unknown)))"),
)


@dataclass
class SyntheticCorpus:
    instances: list[QaInstance]
    store: ConceptStore
    vectors: WordVectors
    planted: dict[str, tuple[str, str]]  # instance id -> (source node id, answer node id)
    penman: dict[str, str]  # instance id -> PENMAN text

    def split(self, *sizes: int) -> list[list[QaInstance]]:
        out, start = [], 0
        for n in sizes:
            out.append(self.instances[start:start + n])
            start += n
        return out


def _pseudo_word(rng: np.random.Generator, used: set[str]) -> str:
    while True:
        w = "".join(_SYLLABLES[k] for k in rng.integers(len(_SYLLABLES), size=3))
        if w not in used:
            used.add(w)
            return w


def build_synthetic_corpus(seed: int, n: int, dim: int = 64, *, min_hard: int = 1, max_hard: int = 2,
                           prefix: str = "syn") -> SyntheticCorpus:
    """Generate ``n`` five-way questions, their store and word vectors (all seeded)."""
    if n < 10:
        raise ValueError("need at least 10 instances")
    rng = np.random.default_rng(seed)
    facts: list[Assertion] = []
    for frame, words in FRAME_WORDS.items():
        facts += [Assertion(frame, "RelatedTo", w) for w in words]
    mod_home = {m: LOCATIONS[k] for m, k in zip(MODIFIERS, rng.permutation(len(LOCATIONS)))}
    facts += [Assertion(m, PLANTED_RELATION, loc) for m, loc in mod_home.items()]

    used: set[str] = set(LOCATIONS) | set(MODIFIERS) | set(CATEGORIES)
    instances, planted, penman = [], {}, {}
    for k in range(n):
        iid = f"{prefix}-{k:04d}"
        text_t, frame, amr_t = TEMPLATES[int(rng.integers(len(TEMPLATES)))]
        subj = "blowfish" if k == 0 and "blowfish" not in used else _pseudo_word(rng, used)
        used.add(subj)
        mod = MODIFIERS[int(rng.integers(len(MODIFIERS)))]
        pool = [loc for loc in LOCATIONS if loc != mod_home[mod]]
        picks = rng.choice(len(pool), size=5, replace=False)
        gold, *others = [pool[i] for i in picks]
        n_hard = int(rng.integers(min_hard, max_hard + 1))
        hard, absent = others[:n_hard], others[n_hard:]
        facts.append(Assertion(subj, PLANTED_RELATION, gold))
        facts.append(Assertion(subj, "IsA", CATEGORIES[int(rng.integers(len(CATEGORIES)))]))
        for h in hard:
            facts.append(Assertion(subj, HARD_RELATIONS[int(rng.integers(len(HARD_RELATIONS)))], h))
        distractors = hard + [mod_home[mod]]
        frame_pool = FRAME_WORDS[frame]
        distractors.append(frame_pool[int(rng.integers(len(frame_pool)))])
        distractors += absent[: 4 - len(distractors)]
        answers = [gold] + distractors[:4]
        order = rng.permutation(5)
        cands = tuple((LABELS[pos], answers[i]) for pos, i in enumerate(order))
        key = LABELS[int(np.flatnonzero(order == 0)[0])]
        text = text_t.format(subj=subj, mod=mod)
        amr_text = amr_t.format(subj=subj, mod=mod)
        amr = parse_penman(amr_text, iid)
        instances.append(QaInstance(iid, text, cands, key, amr))
        planted[iid] = ("s", f"cn/{gold}")
        penman[iid] = amr_text

    store = ConceptStore.from_assertions(facts)
    for inst in instances:
        g = build_acp(inst.amr, store)
        src, dst = planted[inst.id]
        if not any(e.source == src and e.target == dst and e.label == PLANTED_RELATION for e in g.edges):
            raise AssertionError(f"{inst.id}: planted path lost by ACP pruning")

    vocab: dict[str, None] = {}
    for inst in instances:
        for tok in tokenize(inst.question):
            vocab.setdefault(tok)
        for _, cand in inst.candidates:
            for tok in tokenize(cand):
                vocab.setdefault(tok)
        for node in inst.amr.nodes:
            vocab.setdefault(normalize_concept(node.concept))
    for a in store.assertions:
        vocab.setdefault(a.head)
        vocab.setdefault(a.tail)
    tokens = list(vocab)
    vec_rng = np.random.default_rng([seed, 99])
    vectors = WordVectors(tokens, vec_rng.normal(0.0, 1.0, (len(tokens), dim)))
    return SyntheticCorpus(instances, store, vectors, planted, penman)
