"""Train one hierarchical model and show how its per-layer gates spread over pyramid blocks.

Prints the mean gate distribution per (layer, block), split by input
(global image vs object crops), and writes gates.jsonl next to the checkpoint.
"""

import argparse
from pathlib import Path

import numpy as np

from visprefix import dumps, synth
from visprefix.checkpoint import load_checkpoint, save_checkpoint
from visprefix.train import TrainConfig, model_config_for, train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/gates")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--limit", type=int, default=200, help="test examples to trace")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpora = synth.generate_corpus(synth.SyntheticSpec(task="ner"))
    ckpt = out / "checkpoint.hvpc"
    if ckpt.exists():
        model, _ = load_checkpoint(ckpt)
    else:
        cfg = model_config_for(corpora["train"].spec, "hierarchical")
        tc = TrainConfig.desk("ner")
        tc.epochs = args.epochs
        model = train(corpora, cfg, tc, args.seed, log=lambda r: print(r["epoch"], r.get("dev", {}).get("f1"))).model
        save_checkpoint(ckpt, model)

    recs = dumps.gate_records(model, corpora["test"].examples[:args.limit])
    dumps.write_jsonl(out / "gates.jsonl", recs)
    L, c = model.cfg.num_layers, model.cfg.num_blocks
    print("all inputs")
    print(dumps.gate_heatmap(recs, L, c))
    for label, pick in (("global image", lambda i: i == 0), ("object crops", lambda i: i > 0)):
        print(f"\n{label}")
        print(dumps.gate_heatmap([r for r in recs if pick(r["input_index"])], L, c))
    spread = np.array([r["probs"] for r in recs])
    print(f"\nmean max-probability {spread.max(axis=1).mean():.3f} (uniform = {1 / c:.3f})")


if __name__ == "__main__":
    main()
