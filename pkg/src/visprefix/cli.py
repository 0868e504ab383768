"""Command-line entry point: visprefix {synth,train,eval,gradcheck,gate-dump,attn-dump,ablate}.

Settings resolve as built-in desk defaults < flat JSON file (--config) < flags.
Every command first prints the fully resolved settings as one JSON line.
Exit status: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import dumps, experiments, gradcheck, synth
from .checkpoint import load_checkpoint, save_checkpoint
from .config import MODEL_MODES, TASKS
from .errors import ConfigError, FormatError, InputError
from .train import TrainConfig, evaluate, model_config_for, train

COMMANDS = ("synth", "train", "eval", "gradcheck", "gate-dump", "attn-dump", "ablate")
GRADCHECK_TOL = 1e-4


class CliError(Exception):
    """Bad invocation or configuration; reported with exit status 1."""


@dataclass
class RunConfig:
    task: str = "ner"
    mode: str = "hierarchical"
    seed: int = 1
    seeds: list = field(default_factory=lambda: list(experiments.STANDARD_SEEDS))
    modes: list = field(default_factory=lambda: list(experiments.ABLATION_MODES))
    out: str = "runs/default"
    data: str | None = None          # corpus directory; generated from the corpus fields if absent
    checkpoint: str | None = None    # eval / dumps; defaults to <out>/checkpoint.hvpc
    split: str = "test"
    dump_limit: int = 32
    low_resource_fraction: float = 1.0
    irrelevant_rate: float = 0.0
    irrelevant_seed: int = 0
    # synthetic corpus
    data_seed: int = 7
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
    n_relations: int = 6
    # model
    d: int = 64
    num_layers: int = 4
    heads: int = 4
    ffn_width: int = 256
    stem_channels: int = 8
    block_channels: list = field(default_factory=lambda: [8, 16, 32, 64])
    dropout: float = 0.1
    leaky_slope: float = 0.01
    # optimisation; None means the desk value for the task
    batch_size: int | None = None
    peak_lr: float | None = None
    epochs: int | None = None
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1

    def resolve(self) -> "RunConfig":
        if self.task not in TASKS:
            raise CliError(f"--task must be one of {TASKS}, got {self.task!r}")
        if self.mode not in MODEL_MODES:
            raise CliError(f"--mode must be one of {MODEL_MODES}, got {self.mode!r}")
        bad = [m for m in self.modes if m not in MODEL_MODES]
        if bad:
            raise CliError(f"unknown modes {bad}")
        desk = TrainConfig.desk(self.task)
        for k in ("batch_size", "peak_lr", "epochs"):
            if getattr(self, k) is None:
                setattr(self, k, getattr(desk, k))
        return self

    def spec(self) -> synth.SyntheticSpec:
        return synth.SyntheticSpec(
            vocab_size=self.vocab_size, n_types=self.n_types, min_len=self.min_len,
            max_len=self.max_len, ambiguity=self.ambiguity, glyph_size=self.glyph_size,
            image_size=self.image_size, num_objects=self.num_objects,
            max_mentions=self.max_mentions, n_train=self.n_train, n_dev=self.n_dev,
            n_test=self.n_test, task=self.task, n_relations=self.n_relations, seed=self.data_seed)

    def model_overrides(self) -> dict:
        return {"d": self.d, "num_layers": self.num_layers, "heads": self.heads,
                "ffn_width": self.ffn_width, "stem_channels": self.stem_channels,
                "block_channels": tuple(self.block_channels), "dropout": self.dropout,
                "leaky_slope": self.leaky_slope}

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, peak_lr=self.peak_lr, epochs=self.epochs,
                           weight_decay=self.weight_decay, warmup_fraction=self.warmup_fraction,
                           low_resource_fraction=self.low_resource_fraction)


def _load_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise CliError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise CliError(f"config file {path} must hold a flat JSON object")
    return data


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="visprefix", description="Hierarchical visual-prefix fusion on synthetic corpora.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat JSON object of settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=_int_list, help="comma-separated seed list (ablate)")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--mode", choices=MODEL_MODES)
    p.add_argument("--modes", type=lambda s: [m for m in s.split(",") if m], help="ablate modes")
    p.add_argument("--low-resource", dest="low_resource_fraction", type=float,
                   help="fraction of the training split to keep")
    p.add_argument("--irrelevant-rate", dest="irrelevant_rate", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--data", help="corpus directory written by synth")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=synth.SPLITS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--limit", dest="dump_limit", type=int, help="examples per dump")
    return p


def _check_types(values: dict) -> None:
    defaults = dataclasses.asdict(RunConfig())
    optional = {"data": "", "checkpoint": "", "batch_size": 0, "peak_lr": 0.0, "epochs": 0}
    for k, v in values.items():
        ref = defaults[k] if defaults[k] is not None else optional[k]
        if v is None:
            continue
        ok = (isinstance(v, bool) == isinstance(ref, bool)
              and (isinstance(v, type(ref)) or (isinstance(ref, float) and isinstance(v, int))))
        if not ok:
            raise CliError(f"config key {k!r} expects {type(ref).__name__}, got {v!r}")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dataclasses.asdict(RunConfig())
    if args.config:
        file_values = _load_file(args.config)
        unknown = sorted(set(file_values) - set(values))
        if unknown:
            raise CliError(f"unknown config keys: {unknown}")
        values.update(file_values)
    for k, v in vars(args).items():
        if k in values and v is not None:
            values[k] = v
    _check_types(values)
    if args.command == "synth" and args.seed is not None:
        values["data_seed"] = args.seed  # for synth the seed names the corpus
    return RunConfig(**values).resolve()


# ---------------------------------------------------------------- commands


def _corpora(cfg: RunConfig) -> dict:
    if cfg.data:
        corpora = synth.load_corpora(cfg.data)
        if not corpora:
            raise CliError(f"no corpus splits found in {cfg.data}")
        found = corpora[next(iter(corpora))].spec.task
        if found != cfg.task:
            raise CliError(f"corpus in {cfg.data} is for task {found!r}, config says {cfg.task!r}")
        return corpora
    return synth.generate_corpus(cfg.spec())


def _out(cfg: RunConfig) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_synth(cfg: RunConfig) -> int:
    out = _out(cfg)
    corpora = synth.generate_corpus(cfg.spec())
    synth.save_corpora(corpora, out)
    _emit({"written": str(out), "sizes": {k: len(v) for k, v in corpora.items()},
           "text_only_ceiling": synth.text_only_ceiling(cfg.spec())})
    return 0


def _scored(model, corpora: dict, cfg: RunConfig) -> dict:
    split = corpora[cfg.split]
    res = {cfg.split: evaluate(model, split)}
    if cfg.irrelevant_rate > 0:
        noisy = synth.inject_irrelevant_objects(split, cfg.irrelevant_rate, cfg.irrelevant_seed)
        res[f"{cfg.split}_noisy"] = evaluate(model, noisy)
    return res


def cmd_train(cfg: RunConfig) -> int:
    corpora = _corpora(cfg)
    spec = corpora["train"].spec
    mcfg = model_config_for(spec, cfg.mode, **cfg.model_overrides())
    res = train(corpora, mcfg, cfg.train_config(), cfg.seed,
                log=lambda rec: print(json.dumps(rec), file=sys.stderr))
    out = _out(cfg)
    save_checkpoint(out / "checkpoint.hvpc", res.model, res.optim.step)
    metrics = {"train": res.summary(), **_scored(res.model, corpora, cfg)}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1, sort_keys=True))
    _emit(metrics)
    return 0


def _model(cfg: RunConfig):
    path = Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.out) / "checkpoint.hvpc"
    if not path.exists():
        raise CliError(f"checkpoint {path} not found (train first or pass --checkpoint)")
    model, _ = load_checkpoint(path)
    return model


def cmd_eval(cfg: RunConfig) -> int:
    model = _model(cfg)
    _emit(_scored(model, _corpora(cfg), cfg))
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    res = gradcheck.run_suite(seed=cfg.seed)
    worst = {k: v for k, v in res.items() if "/" in k and k != "per_group"}
    _emit({"max_rel_error": res["max_rel_error"], "per_loss": worst, "seconds": res["seconds"],
           "tolerance": GRADCHECK_TOL})
    print(f"max relative error {res['max_rel_error']:.3e}")
    return 0 if res["max_rel_error"] <= GRADCHECK_TOL else 2


def _dump_slice(cfg: RunConfig):
    corpus = _corpora(cfg)[cfg.split]
    return corpus.examples[:cfg.dump_limit]


def cmd_gate_dump(cfg: RunConfig) -> int:
    model = _model(cfg)
    if model.cfg.mode not in ("hierarchical", "only_obj"):
        raise CliError(f"mode {model.cfg.mode!r} has no learned gate to dump")
    recs = dumps.gate_records(model, _dump_slice(cfg))
    n = dumps.write_jsonl(_out(cfg) / "gates.jsonl", recs)
    print(dumps.gate_heatmap(recs, model.cfg.num_layers, model.cfg.num_blocks))
    _emit({"written": str(Path(cfg.out) / "gates.jsonl"), "records": n})
    return 0


def cmd_attn_dump(cfg: RunConfig) -> int:
    model = _model(cfg)
    recs = dumps.attention_records(model, _dump_slice(cfg))
    n = dumps.write_jsonl(_out(cfg) / "attn.jsonl", recs)
    _emit({"written": str(Path(cfg.out) / "attn.jsonl"), "records": n})
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    rate = cfg.irrelevant_rate
    rows = experiments.ablate(cfg.spec(), cfg.modes, cfg.seeds, cfg.train_config(), rate,
                              cfg.irrelevant_seed, cfg.model_overrides(),
                              log=lambda r: print(json.dumps(r), file=sys.stderr))
    summary = experiments.summarize(rows)
    (_out(cfg) / "ablation.json").write_text(json.dumps({"rows": rows, "summary": summary}, indent=1))
    print(experiments.format_table(summary))
    return 0


HANDLERS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "gate-dump": cmd_gate_dump, "attn-dump": cmd_attn_dump, "ablate": cmd_ablate}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        _emit({"command": args.command, "config": dataclasses.asdict(cfg)})
        return HANDLERS[args.command](cfg)
    except (CliError, ConfigError, InputError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
