"""Finite-difference check of the whole model on the tiny configuration."""

from __future__ import annotations

import time

import numpy as np

from . import diffmath as dm
from .config import ModelConfig, tiny_config
from .model import Batch, HVPModel


def _randomise(model: HVPModel, rng: np.random.Generator, scale: float = 0.4) -> None:
    # O(1) values instead of the 0.02 training init: gradients in every group
    # must sit well above the float64 roundoff floor of the central difference.
    # Positive backbone biases keep most conv units on the unit-slope side, so
    # the signal reaching early blocks is not shrunk by 0.01 per layer.
    for name, p in model.named_params().items():
        if name.endswith("_g"):
            p.data[...] = 1.0 + rng.normal(0.0, 0.2, p.shape)
        elif name.startswith("backbone.") and name.split(".")[1].endswith("_b"):
            p.data[...] = rng.uniform(0.1, 0.5, p.shape)
        else:
            p.data[...] = rng.normal(0.0, scale, p.shape)


def tiny_batch(cfg: ModelConfig, rng: np.random.Generator, batch: int = 2, n: int = 4) -> Batch:
    s = cfg.image_size
    return Batch(
        ids=list(range(batch)),
        tokens=rng.integers(0, cfg.vocab_size, size=(batch, n)),
        images=rng.uniform(0.0, 1.0, size=(batch, cfg.num_objects + 1, 3, s, s)),
        tags=rng.integers(0, cfg.num_tags, size=(batch, n)),
        relations=rng.integers(0, cfg.num_relations, size=(batch,)),
    )


def check_model(task: str, mode: str = "hierarchical", seed: int = 0, eps: float = 1e-4,
                per_group: int = 32, report: dict | None = None, exclude: tuple[str, ...] = (),
                **overrides) -> float:
    """Max relative error over all parameter groups for one task's loss (64-bit).

    ``exclude`` drops groups whose name contains any of the given substrings;
    ``overrides`` replace fields of the tiny config.
    """
    rng = np.random.default_rng(seed)
    with dm.precision(64):
        cfg = tiny_config(task=task, mode=mode, **overrides)
        model = HVPModel(cfg, seed=seed)
        _randomise(model, rng)
        batch = tiny_batch(cfg, rng)
        batch.images = batch.images.astype(np.float64)
        params = {k: p for k, p in model.named_params().items()
                  if not any(x in k for x in exclude)}
        return dm.finite_diff_check(lambda: model.loss(batch, training=False),
                                    params, eps=eps, per_group=per_group,
                                    seed=seed, report=report)


def run_suite(seed: int = 0, modes=("hierarchical",)) -> dict:
    """Both losses on the tiny config; returns errors, per-group detail and runtime."""
    t0 = time.perf_counter()
    out = {"per_group": {}}
    for task in ("ner", "re"):
        for mode in modes:
            groups: dict = {}
            err = check_model(task, mode, seed=seed, report=groups)
            out[f"{task}/{mode}"] = err
            out["per_group"][f"{task}/{mode}"] = groups
    out["max_rel_error"] = max(v for k, v in out.items() if "/" in k)
    out["seconds"] = time.perf_counter() - t0
    return out
