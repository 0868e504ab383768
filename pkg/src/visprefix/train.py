"""AdamW with warmup/decay schedule, seeded training loop and corpus-level evaluation."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import diffmath as dm
from .config import ModelConfig
from .errors import ConfigError, DivergenceError
from .metrics import Metrics, eval_ner, eval_re, mention_accuracy
from .model import Batch, HVPModel
from .synth import Corpus, Example, SyntheticSpec


@dataclass
class TrainConfig:
    batch_size: int = 8
    peak_lr: float = 3e-4
    epochs: int = 15
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_fraction: float = 0.1
    low_resource_fraction: float = 1.0
    eval_batch_size: int = 64

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 < self.low_resource_fraction <= 1.0:
            raise ConfigError(f"low_resource_fraction must lie in (0, 1], got {self.low_resource_fraction}")

    @classmethod
    def desk(cls, task: str) -> "TrainConfig":
        if task == "ner":
            return cls(batch_size=8, peak_lr=3e-4, epochs=15)
        return cls(batch_size=32, peak_lr=3e-4, epochs=12)


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class Schedule:
    total_steps: int
    peak_lr: float
    warmup_fraction: float = 0.1

    @property
    def warmup_steps(self) -> int:
        return math.ceil(self.warmup_fraction * self.total_steps)


def lr_at(step: int, sched: Schedule) -> float:
    """Linear warmup reaching the peak at step warmup-1, then linear decay to 0 at total."""
    total, warm, peak = sched.total_steps, sched.warmup_steps, sched.peak_lr
    if not 0 <= step <= total:
        raise ConfigError(f"step {step} outside [0, {total}]")
    # ratio first: both ratios are exactly 1.0 at the peak, never above it
    if step < warm:
        return peak * ((step + 1) / warm)
    if total == warm:
        return 0.0
    return peak * ((total - step) / (total - warm))


# ---------------------------------------------------------------- optimizer


@dataclass
class OptimState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, state: OptimState, lr: float) -> None:
    """One decoupled-decay Adam update in place; decay only where ``decay_eligible``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if p.decay_eligible:
            update = update + state.weight_decay * p.data
        p.data -= (lr * update).astype(p.data.dtype)


# ---------------------------------------------------------------- batching


def collate(examples: list[Example]) -> Batch:
    lens = {len(ex.tokens) for ex in examples}
    if len(lens) != 1:
        raise ConfigError(f"batch mixes sentence lengths {sorted(lens)}")
    tags = None
    rels = None
    if examples[0].tags is not None:
        tags = np.stack([ex.tags for ex in examples])
    if examples[0].relation is not None:
        rels = np.array([ex.relation for ex in examples], dtype=np.int64)
    return Batch(ids=[ex.id for ex in examples],
                 tokens=np.stack([ex.tokens for ex in examples]),
                 images=np.stack([ex.images for ex in examples]).astype(dm.default_dtype()),
                 tags=tags, relations=rels)


def length_batches(examples: list[Example], batch_size: int,
                   rng: np.random.Generator | None = None) -> list[list[Example]]:
    """Equal-length batches (no padding needed). Shuffled within and across buckets if ``rng``."""
    buckets: dict[int, list[Example]] = {}
    order = rng.permutation(len(examples)) if rng is not None else range(len(examples))
    for i in order:
        ex = examples[int(i)]
        buckets.setdefault(len(ex.tokens), []).append(ex)
    batches = []
    for n in sorted(buckets):
        b = buckets[n]
        batches += [b[i:i + batch_size] for i in range(0, len(b), batch_size)]
    if rng is not None:
        batches = [batches[int(i)] for i in rng.permutation(len(batches))]
    return batches


def subsample(examples: list[Example], fraction: float, seed: int) -> list[Example]:
    if fraction >= 1.0:
        return list(examples)
    k = max(1, int(round(fraction * len(examples))))
    keep = np.sort(np.random.default_rng([seed, 0x10]).choice(len(examples), size=k, replace=False))
    return [examples[int(i)] for i in keep]


def model_config_for(spec: SyntheticSpec, mode: str = "hierarchical", **overrides) -> ModelConfig:
    """Desk model sized to a synthetic corpus."""
    base = dict(vocab_size=spec.vocab_size, max_len=max(32, spec.max_len), image_size=spec.image_size,
                num_objects=spec.num_objects, num_tags=1 + 2 * spec.n_types,
                num_relations=spec.n_relations, task=spec.task, mode=mode)
    base.update(overrides)
    return ModelConfig(**base)


# ---------------------------------------------------------------- evaluation


def predict_corpus(model: HVPModel, corpus: Corpus | list[Example], batch_size: int = 64):
    """Predictions in corpus order: tag arrays (NER) or (labels, probs) (RE)."""
    examples = corpus.examples if isinstance(corpus, Corpus) else corpus
    pos = {ex.id: i for i, ex in enumerate(examples)}
    if model.cfg.task == "ner":
        out: list = [None] * len(examples)
        for chunk in length_batches(examples, batch_size):
            for ex, path in zip(chunk, model.predict(collate(chunk))):
                out[pos[ex.id]] = path
        return out
    labels = np.zeros(len(examples), dtype=np.int64)
    probs = np.zeros((len(examples), model.cfg.num_relations))
    for chunk in length_batches(examples, batch_size):
        lab, pr = model.predict(collate(chunk))
        idx = [pos[ex.id] for ex in chunk]
        labels[idx] = lab
        probs[idx] = pr
    return labels, probs


def evaluate(model: HVPModel, corpus: Corpus | list[Example], batch_size: int = 64) -> dict:
    """Metrics dict: precision/recall/f1/support plus mention (NER) or label (RE) accuracy."""
    examples = corpus.examples if isinstance(corpus, Corpus) else corpus
    pred = predict_corpus(model, examples, batch_size)
    if model.cfg.task == "ner":
        gold = [ex.tags for ex in examples]
        m = eval_ner(pred, gold)
        extra = {"mention_accuracy": mention_accuracy(pred, gold)}
    else:
        gold = np.array([ex.relation for ex in examples], dtype=np.int64)
        m = eval_re(pred[0], gold)
        extra = {"mention_accuracy": float(np.mean(pred[0] == gold)) if len(gold) else 0.0}
    return {**m.to_dict(), **extra}


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: HVPModel
    optim: OptimState
    losses: list[float]
    history: list[dict]     # per epoch: {"epoch", "mean_loss", "dev": metrics}
    best_epoch: int
    seconds: float

    def summary(self) -> dict:
        return {"best_epoch": self.best_epoch, "steps": len(self.losses), "seconds": self.seconds,
                "history": self.history}


def _snapshot(model: HVPModel) -> dict:
    return {k: p.data.copy() for k, p in model.named_params().items()}


def _restore(model: HVPModel, snap: dict) -> None:
    for k, p in model.named_params().items():
        p.data[...] = snap[k]


def train(corpora: dict[str, Corpus], model_cfg: ModelConfig, train_cfg: TrainConfig,
          seed: int, log=None) -> TrainResult:
    """Seeded training; keeps the parameters of the epoch with the best dev F1.

    With no dev split the final parameters are kept. Raises DivergenceError
    (carrying the step index) if a non-finite value appears.
    """
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        model = HVPModel(model_cfg, seed=seed)
        params = model.named_params()
        train_ex = subsample(corpora["train"].examples, train_cfg.low_resource_fraction, seed)
        dev = corpora.get("dev")
        rng = np.random.default_rng([seed, 0xB47C])
        drop_rng = np.random.default_rng([seed, 0xD809])
        steps_per_epoch = len(length_batches(train_ex, train_cfg.batch_size))
        sched = Schedule(steps_per_epoch * train_cfg.epochs, train_cfg.peak_lr,
                         train_cfg.warmup_fraction)
        state = OptimState(train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps,
                           train_cfg.weight_decay)
        losses: list[float] = []
        history: list[dict] = []
        best_f1, best_epoch, best = -1.0, 0, None
        for epoch in range(1, train_cfg.epochs + 1):
            ep_losses = []
            for chunk in length_batches(train_ex, train_cfg.batch_size, rng):
                step = state.step
                try:
                    model.zero_grad()
                    loss = model.loss(collate(chunk), training=True, rng=drop_rng)
                    loss.backward()
                    adamw_step(params, state, lr_at(step, sched))
                except FloatingPointError as e:
                    raise DivergenceError(step, str(e)) from e
                value = float(loss.data)
                losses.append(value)
                ep_losses.append(value)
            rec = {"epoch": epoch, "mean_loss": float(np.mean(ep_losses)) if ep_losses else 0.0}
            if dev is not None and len(dev):
                rec["dev"] = evaluate(model, dev, train_cfg.eval_batch_size)
                if rec["dev"]["f1"] > best_f1:
                    best_f1, best_epoch, best = rec["dev"]["f1"], epoch, _snapshot(model)
            history.append(rec)
            if log is not None:
                log(rec)
        if best is not None:
            _restore(model, best)
        else:
            best_epoch = train_cfg.epochs
    return TrainResult(model, state, losses, history, best_epoch, time.perf_counter() - t0)


def run_config_dict(model_cfg: ModelConfig, train_cfg: TrainConfig) -> dict:
    return {"model": model_cfg.to_dict(), "train": asdict(train_cfg)}
