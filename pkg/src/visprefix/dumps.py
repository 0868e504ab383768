"""JSON-lines traces: gate probabilities, token-to-prefix attention, predictions."""

from __future__ import annotations

import json

import numpy as np

from .model import HVPModel, Trace
from .synth import Corpus, Example
from .train import collate, length_batches, predict_corpus


def _examples(corpus) -> list[Example]:
    return corpus.examples if isinstance(corpus, Corpus) else list(corpus)


def _traced(model: HVPModel, examples: list[Example], batch_size: int):
    for chunk in length_batches(examples, batch_size):
        trace = Trace()
        model.predict(collate(chunk), trace=trace)
        yield chunk, trace


def gate_records(model: HVPModel, corpus, batch_size: int = 64) -> list[dict]:
    """One record per (example, layer, visual input); empty for ungated modes."""
    examples = _examples(corpus)
    out = []
    for chunk, trace in _traced(model, examples, batch_size):
        for layer, probs in enumerate(trace.gates, start=1):
            if probs is None:
                continue
            for b, ex in enumerate(chunk):
                for i in range(probs.shape[1]):
                    out.append({"example_id": ex.id, "layer": layer,
                                "input_index": i + trace.input_offset,
                                "probs": [float(x) for x in probs[b, i]]})
    out.sort(key=lambda r: (r["example_id"], r["layer"], r["input_index"]))
    return out


def attention_records(model: HVPModel, corpus, batch_size: int = 64) -> list[dict]:
    """Weight every text token puts on every visual prefix cell, per layer and head."""
    examples = _examples(corpus)
    out = []
    for chunk, trace in _traced(model, examples, batch_size):
        p = trace.prefix_len
        if p == 0:
            continue
        for layer, att in enumerate(trace.attention, start=1):
            # prefix mode: [B, H, n, P + n]; naive concat: [B, H, P + n, P + n] (drop visual queries)
            n_text = att.shape[-1] - p
            rows = att[..., att.shape[-2] - n_text:, :p]
            for b, ex in enumerate(chunk):
                for h in range(rows.shape[1]):
                    for t in range(n_text):
                        for c in range(p):
                            out.append({"example_id": ex.id, "layer": layer, "head": h,
                                        "token_index": t, "prefix_cell_index": c,
                                        "weight": float(rows[b, h, t, c])})
    out.sort(key=lambda r: (r["example_id"], r["layer"], r["head"], r["token_index"],
                            r["prefix_cell_index"]))
    return out


def prediction_records(model: HVPModel, corpus, batch_size: int = 64) -> list[dict]:
    examples = _examples(corpus)
    pred = predict_corpus(model, examples, batch_size)
    if model.cfg.task == "ner":
        return [{"example_id": ex.id, "tokens": ex.tokens.tolist(), "gold_tags": ex.tags.tolist(),
                 "pred_tags": np.asarray(p).tolist()} for ex, p in zip(examples, pred)]
    labels, probs = pred
    return [{"example_id": ex.id, "gold_relation": ex.relation, "pred_relation": int(lab),
             "probs": [float(x) for x in pr]} for ex, lab, pr in zip(examples, labels, probs)]


def write_jsonl(path, records: list[dict]) -> int:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    return len(records)


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def gate_heatmap(records: list[dict], num_layers: int, num_blocks: int) -> str:
    """Text heatmap of mean gate probability per (layer, block), one row per layer."""
    shades = " .:-=+*#%@"
    acc = np.zeros((num_layers, num_blocks))
    cnt = np.zeros(num_layers)
    for r in records:
        acc[r["layer"] - 1] += r["probs"]
        cnt[r["layer"] - 1] += 1
    mean = acc / np.maximum(cnt, 1)[:, None]
    lines = ["layer  " + " ".join(f"blk{j + 1:<3d}" for j in range(num_blocks))]
    for layer in range(num_layers):
        cells = []
        for j in range(num_blocks):
            v = mean[layer, j]
            cells.append(f"{shades[min(int(v * len(shades)), len(shades) - 1)]}{v:5.3f}")
        lines.append(f"{layer + 1:>5d}  " + " ".join(cells))
    return "\n".join(lines)
