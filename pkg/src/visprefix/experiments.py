"""Multi-seed mode comparisons on one fixed synthetic corpus."""

from __future__ import annotations

import time

import numpy as np

from .synth import Corpus, SyntheticSpec, generate_corpus, inject_irrelevant_objects
from .train import TrainConfig, evaluate, model_config_for, train

STANDARD_SEEDS = (1, 49, 1234, 2021, 4321)
ABLATION_MODES = ("hierarchical", "flat", "one_to_three", "only_obj", "text_only")


def run_single(corpora: dict[str, Corpus], mode: str, seed: int, train_cfg: TrainConfig,
               noisy_test: Corpus | None = None, model_overrides: dict | None = None) -> dict:
    """Train one model and score it on the clean (and optionally noisy) test split."""
    spec = corpora["train"].spec
    cfg = model_config_for(spec, mode, **(model_overrides or {}))
    t0 = time.perf_counter()
    res = train(corpora, cfg, train_cfg, seed)
    out = {"mode": mode, "seed": seed, "best_epoch": res.best_epoch,
           "test": evaluate(res.model, corpora["test"], train_cfg.eval_batch_size)}
    if noisy_test is not None:
        out["noisy_test"] = evaluate(res.model, noisy_test, train_cfg.eval_batch_size)
    out["seconds"] = time.perf_counter() - t0
    return out


def ablate(spec: SyntheticSpec, modes=ABLATION_MODES, seeds=STANDARD_SEEDS,
           train_cfg: TrainConfig | None = None, irrelevant_rate: float = 0.5,
           irrelevant_seed: int = 0, model_overrides: dict | None = None, log=None) -> list[dict]:
    """One run per (mode, seed); the corpus depends only on ``spec``."""
    train_cfg = train_cfg or TrainConfig.desk(spec.task)
    corpora = generate_corpus(spec)
    noisy = None
    if irrelevant_rate > 0:
        noisy = inject_irrelevant_objects(corpora["test"], irrelevant_rate, irrelevant_seed)
    rows = []
    for mode in modes:
        for seed in seeds:
            row = run_single(corpora, mode, seed, train_cfg, noisy, model_overrides)
            rows.append(row)
            if log is not None:
                log(row)
    return rows


def summarize(rows: list[dict]) -> dict:
    """Per mode: mean and (population) std of test F1, mention accuracy and noisy F1, in percent."""
    out: dict = {}
    for mode in dict.fromkeys(r["mode"] for r in rows):
        sel = [r for r in rows if r["mode"] == mode]
        stats = {"seeds": [r["seed"] for r in sel]}
        series = {"f1": [r["test"]["f1"] for r in sel],
                  "precision": [r["test"]["precision"] for r in sel],
                  "recall": [r["test"]["recall"] for r in sel],
                  "mention_accuracy": [r["test"]["mention_accuracy"] for r in sel]}
        if all("noisy_test" in r for r in sel):
            series["noisy_f1"] = [r["noisy_test"]["f1"] for r in sel]
            series["degradation"] = [a - b for a, b in zip(series["f1"], series["noisy_f1"])]
        for k, vals in series.items():
            arr = 100.0 * np.asarray(vals)
            stats[k] = {"mean": float(arr.mean()), "std": float(arr.std())}
        out[mode] = stats
    return out


def format_table(summary: dict) -> str:
    cols = ["precision", "recall", "f1", "mention_accuracy", "noisy_f1", "degradation"]
    head = f"{'mode':<14}" + "".join(f"{c:>20}" for c in cols)
    lines = [head, "-" * len(head)]
    for mode, st in summary.items():
        cells = []
        for c in cols:
            cells.append(f"{st[c]['mean']:>11.2f} ± {st[c]['std']:<5.2f}" if c in st else f"{'-':>20}")
        lines.append(f"{mode:<14}" + "".join(cells))
    return "\n".join(lines)
