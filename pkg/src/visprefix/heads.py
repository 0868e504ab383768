"""Sequence-labelling CRF head and [CLS] relation-classification head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffmath as dm
from .diffmath import Module, Tensor
from .errors import ConfigError, DimensionError, InputError

ENTITY_TYPES = ("PER", "LOC", "ORG", "MISC")


@dataclass(frozen=True)
class TagSet:
    """BIO tags: index 0 is O, then B-X, I-X for each entity type in order."""

    tags: tuple[str, ...]

    @classmethod
    def from_types(cls, types) -> "TagSet":
        tags = ["O"]
        for t in types:
            tags += [f"B-{t}", f"I-{t}"]
        return cls(tuple(tags))

    def __post_init__(self):
        if not self.tags or self.tags[0] != "O":
            raise ConfigError("tag set must start with O")
        for t in self.tags:
            if t.startswith("B-") and f"I-{t[2:]}" not in self.tags:
                raise ConfigError(f"{t} has no matching I- tag")

    def __len__(self) -> int:
        return len(self.tags)

    def index(self, tag: str) -> int:
        return self.tags.index(tag)

    @property
    def types(self) -> list[str]:
        return [t[2:] for t in self.tags if t.startswith("B-")]

    def b_index(self, type_idx: int) -> int:
        return 1 + 2 * type_idx

    def i_index(self, type_idx: int) -> int:
        return 2 + 2 * type_idx


def default_tagset(num_types: int = 4) -> TagSet:
    names = list(ENTITY_TYPES[:num_types]) + [f"T{i}" for i in range(len(ENTITY_TYPES), num_types)]
    return TagSet.from_types(names)


class CrfParams(Module):
    def __init__(self, d: int, num_tags: int, rng: np.random.Generator):
        self.emit_w = dm.init_normal(rng, (d, num_tags))
        self.emit_b = dm.init_zeros((num_tags,))
        self.trans = dm.init_normal(rng, (num_tags, num_tags))
        self.start = dm.init_zeros((num_tags,))
        self.stop = dm.init_zeros((num_tags,))

    @property
    def num_tags(self) -> int:
        return self.trans.shape[0]


def emissions(h_last: Tensor, crf: CrfParams) -> Tensor:
    return dm.linear(h_last, crf.emit_w, crf.emit_b)


def crf_log_partition(em: Tensor, crf: CrfParams) -> Tensor:
    """Log-sum over all tag paths of start + emissions + transitions + stop.

    ``em`` is [..., n, Y]; returns [...] (a 0-d tensor for a single sequence).
    """
    em = dm.as_tensor(em)
    n, ny = em.shape[-2:]
    if n < 1:
        raise DimensionError("CRF needs at least one position")
    if ny != crf.num_tags:
        raise DimensionError(f"emissions have {ny} tags, CRF has {crf.num_tags}")
    alpha = em[..., 0, :] + crf.start
    for t in range(1, n):
        # scores[..., i, j] = alpha[i] + trans[i, j]
        scores = alpha.reshape(alpha.shape + (1,)) + crf.trans
        alpha = dm.logsumexp(scores, axis=-2) + em[..., t, :]
    return dm.logsumexp(alpha + crf.stop, axis=-1)


def _check_tags(tags: np.ndarray, em_shape: tuple, ny: int) -> None:
    if tags.shape != em_shape[:-1]:
        raise DimensionError(f"tags shape {tags.shape} does not match emissions {em_shape}")
    if tags.size and (tags.min() < 0 or tags.max() >= ny):
        raise InputError(f"gold tag index outside [0, {ny})")


def crf_path_score(em: Tensor, tags, crf: CrfParams) -> Tensor:
    """Unnormalised log score of the given tag paths; tags [..., n] -> [...]."""
    em = dm.as_tensor(em)
    tags = np.asarray(tags, dtype=np.int64)
    _check_tags(tags, em.shape, crf.num_tags)
    lead = em.shape[:-2]
    n, ny = em.shape[-2:]
    e2 = em.reshape((-1, n, ny))
    t2 = tags.reshape(-1, n)
    b = t2.shape[0]
    rows = np.arange(b)[:, None]
    cols = np.arange(n)[None, :]
    score = e2[rows, cols, t2].sum(axis=-1)
    score = score + crf.start[t2[:, 0]] + crf.stop[t2[:, -1]]
    if n > 1:
        score = score + crf.trans[t2[:, :-1], t2[:, 1:]].sum(axis=-1)
    return score.reshape(lead)


def crf_nll(em: Tensor, tags, crf: CrfParams) -> Tensor:
    """-log p(tags | emissions) per sequence: log Z minus the gold path score."""
    return crf_log_partition(em, crf) - crf_path_score(em, tags, crf)


def crf_viterbi(em: np.ndarray, crf: CrfParams) -> np.ndarray:
    """Best-scoring path for one sequence [n, Y]; ties go to the lower tag index."""
    em = em.data if isinstance(em, Tensor) else np.asarray(em)
    if em.ndim != 2 or em.shape[0] < 1:
        raise DimensionError(f"viterbi expects [n, Y] emissions, got {em.shape}")
    trans, start, stop = crf.trans.data, crf.start.data, crf.stop.data
    n = em.shape[0]
    score = start + em[0]
    back = np.zeros((n, em.shape[1]), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(em.shape[1])] + em[t]
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(score + stop))
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def path_score_np(em: np.ndarray, path, crf: CrfParams) -> float:
    path = np.asarray(path)
    s = crf.start.data[path[0]] + crf.stop.data[path[-1]] + em[np.arange(len(path)), path].sum()
    return float(s + crf.trans.data[path[:-1], path[1:]].sum())


class ReParams(Module):
    def __init__(self, d: int, num_relations: int, rng: np.random.Generator):
        self.w = dm.init_normal(rng, (d, num_relations))
        self.b = dm.init_zeros((num_relations,))


def re_logits(h_last: Tensor, re: ReParams) -> Tensor:
    """Logits from the [CLS] row (position 0) of H^L [..., n, d]."""
    if h_last.shape[-2] < 1:
        raise DimensionError("relation head needs row 0")
    return dm.linear(h_last[..., 0, :], re.w, re.b)


def re_loss(h_last: Tensor, gold, re: ReParams) -> Tensor:
    """Cross-entropy of the gold relation per example; gold [...] -> [...]."""
    logits = re_logits(h_last, re)
    nrel = logits.shape[-1]
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size and (gold.min() < 0 or gold.max() >= nrel):
        raise InputError(f"relation label outside [0, {nrel})")
    logp = dm.log_softmax(logits, axis=-1)
    if logp.ndim == 1:
        return -logp[int(gold)]
    lp2 = logp.reshape((-1, nrel))
    picked = lp2[np.arange(lp2.shape[0]), gold.reshape(-1)]
    return (-picked).reshape(logits.shape[:-1])
