"""Synthetic multimodal corpora where the image settles what the text leaves ambiguous.

Each entity type (NER) or relation (RE) owns an 8x8 binary glyph with its own
colour. A controlled fraction ``ambiguity`` of entity mentions (NER) or
sentences (RE) uses a surface token shared by exactly two labels with equal
prior; for those, the true label's glyph is drawn into one object crop and
into the global image. Without the image the best achievable accuracy on the
ambiguous part is 1/2, so the text-only ceiling is ``1 - ambiguity / 2``.

On disk a split is ``<split>.jsonl`` (text and labels), ``<split>.hvpt``
(one HVPT record [m+1, 3, S, S] per example) and ``<split>.idx`` (ids to byte
offsets), plus a shared ``spec.json``.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import hvpt
from .errors import ConfigError, FormatError
from .heads import default_tagset

SPLITS = ("train", "dev", "test")
IDX_MAGIC = b"HVPI"
IDX_VERSION = 1


@dataclass
class SyntheticSpec:
    vocab_size: int = 200
    n_types: int = 4
    min_len: int = 6
    max_len: int = 16
    ambiguity: float = 0.5
    glyph_size: int = 8
    image_size: int = 32
    num_objects: int = 2
    max_mentions: int = 2
    n_train: int = 2000
    n_dev: int = 500
    n_test: int = 500
    task: str = "ner"
    n_relations: int = 6
    seed: int = 7

    def __post_init__(self):
        if self.task not in ("ner", "re"):
            raise ConfigError(f"unknown task {self.task!r}")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ConfigError(f"ambiguity must lie in [0, 1], got {self.ambiguity}")
        if self.ambiguity > 0 and self.num_objects < 1:
            raise ConfigError("ambiguous mentions need at least one object crop to be resolvable")
        if self.min_len < 6 or self.max_len < self.min_len:
            raise ConfigError(f"sentence length range [{self.min_len}, {self.max_len}] is invalid "
                              "(minimum length is 6)")
        if self.glyph_size > self.image_size // 2:
            raise ConfigError("glyphs must fit twice along the image side")
        if self.n_labels < 2:
            raise ConfigError("need at least two entity types / relations")
        self.lexicon()

    @property
    def n_labels(self) -> int:
        return self.n_types if self.task == "ner" else self.n_relations

    @property
    def split_sizes(self) -> dict:
        return {"train": self.n_train, "dev": self.n_dev, "test": self.n_test}

    def lexicon(self) -> "Lexicon":
        return Lexicon.build(self)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Lexicon:
    """Fixed partition of the vocabulary into token roles."""

    cls_id: int
    continuation: tuple[int, ...]
    heads: tuple[tuple[int, ...], ...]           # per label: unambiguous tokens
    pairs: tuple[tuple[int, int], ...]           # label pairs sharing ambiguous tokens
    ambiguous: tuple[tuple[int, ...], ...]       # per pair: ambiguous tokens
    entity_tokens: tuple[int, ...]               # RE only: type-free entity tokens
    fillers: tuple[int, ...]

    @classmethod
    def build(cls, spec: SyntheticSpec) -> "Lexicon":
        n = spec.n_labels
        pairs = tuple(itertools.combinations(range(n), 2))
        nxt = 1

        def take(k):
            nonlocal nxt
            out = tuple(range(nxt, nxt + k))
            nxt += k
            return out

        if spec.task == "ner":
            cont = take(8)
            ents = ()
            heads = tuple(take(8) for _ in range(n))
            amb = tuple(take(4) for _ in pairs)
        else:
            cont = ()
            ents = take(16)
            heads = tuple(take(4) for _ in range(n))
            amb = tuple(take(2) for _ in pairs)
        n_fill = spec.vocab_size - nxt
        if n_fill < 16:
            raise ConfigError(f"vocab_size {spec.vocab_size} leaves {n_fill} filler tokens; need 16")
        return cls(0, cont, heads, pairs, amb, ents, tuple(range(nxt, spec.vocab_size)))

    def pair_of(self, token: int) -> tuple[int, int] | None:
        for pair, toks in zip(self.pairs, self.ambiguous):
            if token in toks:
                return pair
        return None


@dataclass(eq=False)
class Example:
    id: int
    tokens: np.ndarray                  # [n] int64
    images: np.ndarray                  # [m+1, 3, S, S] float32, global first
    tags: np.ndarray | None = None      # [n] int64 (NER)
    relation: int | None = None         # RE
    relevance: list = dataclasses.field(default_factory=list)  # per object, True = relevant

    def same_as(self, other: "Example") -> bool:
        return (self.id == other.id and np.array_equal(self.tokens, other.tokens)
                and np.array_equal(self.images, other.images)
                and ((self.tags is None and other.tags is None)
                     or (self.tags is not None and other.tags is not None
                         and np.array_equal(self.tags, other.tags)))
                and self.relation == other.relation and list(self.relevance) == list(other.relevance))


@dataclass
class Corpus:
    spec: SyntheticSpec
    split: str
    examples: list

    def __len__(self) -> int:
        return len(self.examples)

    def same_as(self, other: "Corpus") -> bool:
        return (self.spec == other.spec and self.split == other.split
                and len(self) == len(other)
                and all(a.same_as(b) for a, b in zip(self.examples, other.examples)))


# ---------------------------------------------------------------- glyphs


def glyph_bank(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """(patterns [G, g, g] bool, colours [G, 3]) - one glyph per label."""
    rng = np.random.default_rng([spec.seed, 0x6C79])
    g = spec.glyph_size
    min_dist = g * g // 4
    pats: list[np.ndarray] = []
    while len(pats) < spec.n_labels:
        cand = rng.random((g, g)) < 0.5
        if not 0.35 <= cand.mean() <= 0.65:
            continue
        if all(np.sum(cand != p) >= min_dist for p in pats):
            pats.append(cand)
    colours = rng.uniform(0.5, 1.0, size=(spec.n_labels, 3)).astype(np.float32)
    return np.stack(pats), colours


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(0.0, 0.1, size=(3, size, size)).astype(np.float32)


def _draw(img: np.ndarray, glyph: int, pos: tuple[int, int], bank) -> None:
    pats, colours = bank
    g = pats.shape[1]
    r, c = pos
    region = img[:, r:r + g, c:c + g]
    region[:, pats[glyph]] = colours[glyph][:, None]


def _positions(rng: np.random.Generator, count: int, size: int, g: int) -> list[tuple[int, int]]:
    """Non-overlapping top-left corners for ``count`` glyphs."""
    out: list[tuple[int, int]] = []
    while len(out) < count:
        r, c = (int(v) for v in rng.integers(0, size - g + 1, size=2))
        if all(abs(r - r2) >= g or abs(c - c2) >= g for r2, c2 in out):
            out.append((r, c))
    return out


def find_glyphs(img: np.ndarray, bank) -> set[int]:
    """Labels whose glyph appears verbatim somewhere in ``img`` [3, S, S]."""
    pats, colours = bank
    g = pats.shape[1]
    win = sliding_window_view(img, (g, g), axis=(1, 2))  # [3, P, P, g, g]
    found = set()
    for j, (pat, col) in enumerate(zip(pats, colours)):
        on = win[:, :, :, pat]  # [3, P, P, n_on]
        hit = np.all(on == col[:, None, None, None], axis=(0, 3))
        if hit.any():
            found.add(j)
    return found


# ---------------------------------------------------------------- generation


def _layout(rng: np.random.Generator, n: int, lens: list[int], start: int = 0) -> list[int]:
    """Start offsets for consecutive segments with at least one gap token between them."""
    k = len(lens)
    free = n - start - sum(lens) - (k - 1)
    bins = rng.multinomial(free, [1.0 / (k + 1)] * (k + 1))
    pos, out = start + bins[0], []
    for i, ln in enumerate(lens):
        out.append(int(pos))
        pos += ln + 1 + (bins[i + 1] if i + 1 < k else 0)
    return out


def _ner_structures(rng, spec: SyntheticSpec, count: int) -> list[dict]:
    out = []
    for _ in range(count):
        n = int(rng.integers(spec.min_len, spec.max_len + 1))
        k = int(rng.integers(1, spec.max_mentions + 1))
        lens = [1 if rng.random() < 0.6 else 2 for _ in range(k)]
        while sum(lens) + k - 1 > n:
            lens.pop()
        out.append({"n": n, "lens": lens, "starts": _layout(rng, n, lens)})
    return out


def _choose_ambiguous(rng, capacities: list[int], total_slots: list[int], rho: float) -> list[int]:
    """How many ambiguous slots each sentence gets, hitting round(rho * total) exactly."""
    target = int(round(rho * sum(total_slots)))
    if target > sum(capacities):
        raise ConfigError(f"ambiguity {rho} needs {target} ambiguous slots, only "
                          f"{sum(capacities)} are realisable with the object/label budget")
    slots = [i for i, c in enumerate(total_slots) for _ in range(c)]
    order = rng.permutation(len(slots))
    chosen = [0] * len(total_slots)
    picked = 0
    for j in order:
        if picked == target:
            break
        s = slots[j]
        if chosen[s] < capacities[s]:
            chosen[s] += 1
            picked += 1
    if picked < target:
        raise ConfigError(f"could only place {picked} of {target} ambiguous slots")
    return chosen


def _images(rng, spec: SyntheticSpec, glyphs: list[int], bank) -> np.ndarray:
    m, s, g = spec.num_objects, spec.image_size, spec.glyph_size
    imgs = np.stack([_background(rng, s) for _ in range(m + 1)])
    crops = rng.permutation(m)[:len(glyphs)]
    for glyph, crop in zip(glyphs, crops):
        _draw(imgs[1 + crop], glyph, _positions(rng, 1, s, g)[0], bank)
    for glyph, pos in zip(glyphs, _positions(rng, len(glyphs), s, g)):
        _draw(imgs[0], glyph, pos, bank)
    return imgs


def _gen_ner_split(rng, spec: SyntheticSpec, lex: Lexicon, count: int, seen: set, bank,
                   first_id: int) -> list[Example]:
    tagset = default_tagset(spec.n_types)
    structs = _ner_structures(rng, spec, count)
    per_sentence_cap = 2 if spec.n_types >= 4 else 1
    caps = [min(len(st["lens"]), spec.num_objects, per_sentence_cap) for st in structs]
    n_amb = _choose_ambiguous(rng, caps, [len(st["lens"]) for st in structs], spec.ambiguity)
    examples = []
    for i, (st, k_amb) in enumerate(zip(structs, n_amb)):
        amb_flags = [False] * len(st["lens"])
        for j in rng.permutation(len(st["lens"]))[:k_amb]:
            amb_flags[j] = True
        types, pairs = [], []
        used_pair = None
        for flag in amb_flags:
            if flag:
                options = [p for p in range(len(lex.pairs))
                           if used_pair is None or not set(lex.pairs[p]) & set(lex.pairs[used_pair])]
                p = options[int(rng.integers(len(options)))]
                used_pair = p
                types.append(lex.pairs[p][int(rng.integers(2))])
                pairs.append(p)
            else:
                types.append(int(rng.integers(spec.n_types)))
                pairs.append(None)
        tags = np.zeros(st["n"], dtype=np.int64)
        for start, ln, t in zip(st["starts"], st["lens"], types):
            tags[start] = tagset.b_index(t)
            tags[start + 1:start + ln] = tagset.i_index(t)
        for _ in range(1000):
            toks = rng.choice(lex.fillers, size=st["n"]).astype(np.int64)
            for start, ln, t, p in zip(st["starts"], st["lens"], types, pairs):
                pool = lex.heads[t] if p is None else lex.ambiguous[p]
                toks[start] = pool[int(rng.integers(len(pool)))]
                for q in range(start + 1, start + ln):
                    toks[q] = lex.continuation[int(rng.integers(len(lex.continuation)))]
            if tuple(toks) not in seen:
                break
        else:
            raise ConfigError("could not draw a sentence unseen in earlier splits")
        seen.add(tuple(toks))
        glyphs = [t for t, p in zip(types, pairs) if p is not None]
        imgs = _images(rng, spec, glyphs, bank)
        examples.append(Example(first_id + i, toks, imgs, tags=tags,
                                relevance=[True] * spec.num_objects))
    return examples


def _gen_re_split(rng, spec: SyntheticSpec, lex: Lexicon, count: int, seen: set, bank,
                  first_id: int) -> list[Example]:
    ambiguous = _choose_ambiguous(rng, [1] * count, [1] * count, spec.ambiguity)
    examples = []
    for i in range(count):
        n = int(rng.integers(spec.min_len, spec.max_len + 1))
        rel = int(rng.integers(spec.n_relations))
        subj, trig, obj = _layout(rng, n, [1, 1, 1], start=1)
        for _ in range(1000):
            toks = rng.choice(lex.fillers, size=n).astype(np.int64)
            toks[0] = lex.cls_id
            toks[subj] = lex.entity_tokens[int(rng.integers(len(lex.entity_tokens)))]
            toks[obj] = lex.entity_tokens[int(rng.integers(len(lex.entity_tokens)))]
            if ambiguous[i]:
                options = [p for p, pair in enumerate(lex.pairs) if rel in pair]
                p = options[int(rng.integers(len(options)))]
                pool = lex.ambiguous[p]
            else:
                pool = lex.heads[rel]
            toks[trig] = pool[int(rng.integers(len(pool)))]
            if tuple(toks) not in seen:
                break
        else:
            raise ConfigError("could not draw a sentence unseen in earlier splits")
        seen.add(tuple(toks))
        imgs = _images(rng, spec, [rel] if ambiguous[i] else [], bank)
        examples.append(Example(first_id + i, toks, imgs, relation=rel,
                                relevance=[True] * spec.num_objects))
    return examples


def generate_corpus(spec: SyntheticSpec) -> dict[str, Corpus]:
    """All three splits; a pure function of ``spec`` (seed included)."""
    lex = spec.lexicon()
    bank = glyph_bank(spec)
    seen: set = set()
    out, next_id = {}, 0
    gen = _gen_ner_split if spec.task == "ner" else _gen_re_split
    for k, split in enumerate(SPLITS):
        rng = np.random.default_rng([spec.seed, k + 1])
        count = spec.split_sizes[split]
        out[split] = Corpus(spec, split, gen(rng, spec, lex, count, seen, bank, next_id))
        next_id += count
    return out


def text_only_ceiling(spec: SyntheticSpec) -> float:
    """Bayes-optimal mention (NER) or sentence (RE) accuracy without the image."""
    return 1.0 - spec.ambiguity / 2.0


def inject_irrelevant_objects(corpus: Corpus, rate: float, seed: int) -> Corpus:
    """Copy of ``corpus`` where a ``rate`` share of examples has one relevant crop
    replaced by the glyph of a label absent from that sentence."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"irrelevant rate must lie in [0, 1], got {rate}")
    spec = corpus.spec
    bank = glyph_bank(spec)
    rng = np.random.default_rng(seed)
    n = len(corpus)
    chosen = set(int(i) for i in rng.choice(n, size=int(round(rate * n)), replace=False)) if n else set()
    out = []
    for i, ex in enumerate(corpus.examples):
        ex = dataclasses.replace(ex, images=ex.images.copy(), relevance=list(ex.relevance))
        if i in chosen:
            candidates = [j for j, ok in enumerate(ex.relevance) if ok]
            if not candidates:
                raise ConfigError(f"example {ex.id} has no relevant crop left to replace")
            crop = candidates[int(rng.integers(len(candidates)))]
            if spec.task == "ner":
                present = {(int(t) - 1) // 2 for t in ex.tags if t > 0}
            else:
                present = {ex.relation}
            absent = [lab for lab in range(spec.n_labels) if lab not in present]
            if not absent:
                raise ConfigError(f"example {ex.id} uses every label; nothing is absent")
            glyph = absent[int(rng.integers(len(absent)))]
            img = _background(rng, spec.image_size)
            _draw(img, glyph, _positions(rng, 1, spec.image_size, spec.glyph_size)[0], bank)
            ex.images[1 + crop] = img
            ex.relevance[crop] = False
        out.append(ex)
    return Corpus(spec, corpus.split, out)


def perturbed_ids(corpus: Corpus) -> list[int]:
    return [ex.id for ex in corpus.examples if not all(ex.relevance)]


def mention_types(ex: Example) -> list[tuple[int, int, int]]:
    """(start, end, type) for every gold mention of an NER example (end exclusive)."""
    out, t = [], ex.tags
    i = 0
    while i < len(t):
        if t[i] > 0 and t[i] % 2 == 1:
            typ = (int(t[i]) - 1) // 2
            j = i + 1
            while j < len(t) and t[j] == t[i] + 1:
                j += 1
            out.append((i, j, typ))
            i = j
        else:
            i += 1
    return out


# ---------------------------------------------------------------- persistence


def _write_idx(path: Path, entries: list[tuple[int, int]]) -> None:
    with open(path, "wb") as f:
        f.write(IDX_MAGIC + bytes([IDX_VERSION]) + struct.pack("<I", len(entries)))
        for ex_id, off in entries:
            f.write(struct.pack("<IQ", ex_id, off))


def _read_idx(path: Path) -> list[tuple[int, int]]:
    buf = path.read_bytes()
    if len(buf) < 9 or buf[:4] != IDX_MAGIC:
        raise FormatError(f"{path}: bad index magic at offset 0")
    if buf[4] != IDX_VERSION:
        raise FormatError(f"{path}: unsupported index version {buf[4]} at offset 4")
    (count,) = struct.unpack_from("<I", buf, 5)
    if len(buf) != 9 + 12 * count:
        raise FormatError(f"{path}: index truncated, expected {9 + 12 * count} bytes, got {len(buf)}")
    return [struct.unpack_from("<IQ", buf, 9 + 12 * i) for i in range(count)]


def save_corpus(corpus: Corpus, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "spec.json").write_text(json.dumps(corpus.spec.to_dict(), indent=1, sort_keys=True))
    entries = []
    with open(d / f"{corpus.split}.hvpt", "wb") as tf, \
            open(d / f"{corpus.split}.jsonl", "w", encoding="utf-8") as jf:
        offset = 0
        for ex in corpus.examples:
            rec = {"id": ex.id, "tokens": ex.tokens.tolist(), "object_relevance": list(ex.relevance)}
            if ex.tags is not None:
                rec["tags"] = ex.tags.tolist()
            if ex.relation is not None:
                rec["relation"] = ex.relation
            jf.write(json.dumps(rec) + "\n")
            entries.append((ex.id, offset))
            offset += hvpt.write_tensor(tf, ex.images)
    _write_idx(d / f"{corpus.split}.idx", entries)


def save_corpora(corpora: dict[str, Corpus], directory) -> None:
    for c in corpora.values():
        save_corpus(c, directory)


def load_spec(directory) -> SyntheticSpec:
    return SyntheticSpec(**json.loads((Path(directory) / "spec.json").read_text()))


def load_corpus(directory, split: str) -> Corpus:
    d = Path(directory)
    spec = load_spec(d)
    entries = _read_idx(d / f"{split}.idx")
    blob = (d / f"{split}.hvpt").read_bytes()
    records = [json.loads(line) for line in
               (d / f"{split}.jsonl").read_text(encoding="utf-8").splitlines() if line.strip()]
    if len(records) != len(entries):
        raise FormatError(f"{split}: {len(records)} text records but {len(entries)} index entries")
    examples = []
    for rec, (ex_id, off) in zip(records, entries):
        if rec["id"] != ex_id:
            raise FormatError(f"{split}: id {rec['id']} in text file, {ex_id} in index")
        images, _ = hvpt.decode(blob, off)
        tags = np.asarray(rec["tags"], dtype=np.int64) if "tags" in rec else None
        examples.append(Example(ex_id, np.asarray(rec["tokens"], dtype=np.int64), images,
                                tags=tags, relation=rec.get("relation"),
                                relevance=list(rec["object_relevance"])))
    return Corpus(spec, split, examples)


def load_corpora(directory) -> dict[str, Corpus]:
    return {s: load_corpus(directory, s) for s in SPLITS if (Path(directory) / f"{s}.idx").exists()}


# ---------------------------------------------------------------- text-only reference


def frequency_baseline(train: Corpus, test: Corpus) -> float:
    """Mention (NER) or sentence (RE) accuracy of a text-only count table.

    NER: each token gets its most frequent training tag. RE: naive Bayes over
    the sentence's tokens with add-one smoothing. Neither looks at images, so
    both stay under the text-only ceiling up to sampling noise.
    """
    from .metrics import mention_accuracy

    spec = train.spec
    if spec.task == "ner":
        n_tags = 1 + 2 * spec.n_types
        counts = np.zeros((spec.vocab_size, n_tags))
        for ex in train.examples:
            np.add.at(counts, (ex.tokens, ex.tags), 1)
        table = np.argmax(counts, axis=1)
        pred = [table[ex.tokens] for ex in test.examples]
        return mention_accuracy(pred, [ex.tags for ex in test.examples])
    counts = np.ones((spec.vocab_size, spec.n_relations))
    prior = np.ones(spec.n_relations)
    for ex in train.examples:
        counts[ex.tokens, ex.relation] += 1
        prior[ex.relation] += 1
    logp = np.log(counts / counts.sum(axis=1, keepdims=True))
    hits = [int(np.argmax(np.log(prior) + logp[ex.tokens].sum(axis=0))) == ex.relation
            for ex in test.examples]
    return float(np.mean(hits)) if hits else 0.0
