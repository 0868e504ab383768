import hashlib
import json

import pytest

from visprefix import cli, dumps

SMALL = {"n_train": 24, "n_dev": 8, "n_test": 8, "d": 16, "num_layers": 2, "heads": 2,
         "ffn_width": 32, "stem_channels": 3, "block_channels": [4, 4, 4, 4], "epochs": 1,
         "batch_size": 4}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def first_json(out: str) -> dict:
    return json.loads(out.splitlines()[0])


def last_json(out: str) -> dict:
    return json.loads(out.strip().splitlines()[-1])


def checksums(directory) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def test_synth_seed_is_reproducible(tmp_path, small_config, capsys):
    for name in ("a", "b"):
        assert cli.run(["synth", "--config", small_config, "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert checksums(tmp_path / "a") == checksums(tmp_path / "b")
    assert cli.run(["synth", "--config", small_config, "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert checksums(tmp_path / "a") != checksums(tmp_path / "c")
    assert first_json(capsys.readouterr().out)["config"]["data_seed"] == 7


def test_precedence_defaults_file_flags(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"mode": "flat", "epochs": 3, "d": 32}))
    assert cli.run(["synth", "--config", str(path), "--epochs", "5", "--out", str(tmp_path / "o"),
                    "--task", "re"]) == 0
    cfg = first_json(capsys.readouterr().out)["config"]
    assert cfg["mode"] == "flat"          # file over default
    assert cfg["epochs"] == 5             # flag over file
    assert cfg["d"] == 32
    assert cfg["heads"] == 4              # untouched default
    assert cfg["batch_size"] == 32        # RE desk value filled in
    assert cfg["seeds"] == [1, 49, 1234, 2021, 4321]


def test_echoed_config_reproduces_the_run(tmp_path, small_config, capsys):
    assert cli.run(["synth", "--config", small_config, "--out", str(tmp_path / "a")]) == 0
    echoed = first_json(capsys.readouterr().out)["config"]
    echoed["out"] = str(tmp_path / "b")
    replay = tmp_path / "replay.json"
    replay.write_text(json.dumps(echoed))
    assert cli.run(["synth", "--config", str(replay)]) == 0
    assert checksums(tmp_path / "a") == checksums(tmp_path / "b")


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["train", "--mode", "nonsense"],
    ["train", "--seeds", "1,x"],
    ["eval", "--checkpoint", "/nonexistent/ck.hvpc"],
])
def test_usage_errors_exit_one(argv, capsys):
    assert cli.run(argv) == 1
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("content", ["{not json", "[1, 2]", '{"bogus_key": 1}', '{"d": "wide"}',
                                     '{"epochs": 1.5}', '{"ambiguity": true}'])
def test_malformed_config_exits_one(tmp_path, content, capsys):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert cli.run(["synth", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_invalid_spec_value_exits_one(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"ambiguity": 2.0}))
    assert cli.run(["synth", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_internal_error_exits_two(monkeypatch, tmp_path, capsys):
    def boom(cfg):
        raise RuntimeError("kaput")
    monkeypatch.setitem(cli.HANDLERS, "synth", boom)
    assert cli.run(["synth", "--out", str(tmp_path)]) == 2
    assert "internal error" in capsys.readouterr().err


def test_train_eval_dumps_pipeline(tmp_path, small_config, capsys):
    data, run = tmp_path / "data", tmp_path / "run"
    assert cli.run(["synth", "--config", small_config, "--out", str(data)]) == 0
    before = checksums(data)
    assert cli.run(["train", "--config", small_config, "--data", str(data), "--out", str(run),
                    "--irrelevant-rate", "0.5"]) == 0
    trained = last_json(capsys.readouterr().out)
    assert {"train", "test", "test_noisy"} <= set(trained)
    assert (run / "checkpoint.hvpc").exists()
    assert json.loads((run / "metrics.json").read_text()) == trained

    assert cli.run(["eval", "--config", small_config, "--data", str(data), "--out", str(run)]) == 0
    assert last_json(capsys.readouterr().out)["test"] == trained["test"]

    assert cli.run(["gate-dump", "--config", small_config, "--data", str(data), "--out", str(run),
                    "--limit", "5"]) == 0
    gates = dumps.read_jsonl(run / "gates.jsonl")
    assert len(gates) == 2 * 5 * 3   # L * B * (m + 1)
    assert "layer" in capsys.readouterr().out

    assert cli.run(["attn-dump", "--config", small_config, "--data", str(data), "--out", str(run),
                    "--limit", "2"]) == 0
    assert dumps.read_jsonl(run / "attn.jsonl")
    assert checksums(data) == before  # inputs untouched


def test_gate_dump_refuses_ungated_mode(tmp_path, small_config, capsys):
    run = tmp_path / "run"
    assert cli.run(["train", "--config", small_config, "--mode", "flat", "--out", str(run),
                    "--epochs", "0"]) == 0
    assert cli.run(["gate-dump", "--config", small_config, "--out", str(run)]) == 1


def test_eval_refuses_other_task_corpus(tmp_path, small_config, capsys):
    data = tmp_path / "data"
    assert cli.run(["synth", "--config", small_config, "--task", "re", "--out", str(data)]) == 0
    assert cli.run(["eval", "--config", small_config, "--data", str(data), "--out", str(tmp_path)]) == 1


def test_ablate_reports_every_mode(tmp_path, small_config, capsys):
    assert cli.run(["ablate", "--config", small_config, "--seeds", "1,49", "--modes",
                    "hierarchical,text_only", "--epochs", "0", "--out", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert "hierarchical" in table and "text_only" in table
    saved = json.loads((tmp_path / "ablation.json").read_text())
    assert len(saved["rows"]) == 4
    assert saved["summary"]["text_only"]["seeds"] == [1, 49]


def test_gradcheck_command_passes(capsys):
    assert cli.run(["gradcheck"]) == 0
    out = capsys.readouterr().out
    report = json.loads(out.splitlines()[1])
    assert report["max_rel_error"] <= 1e-4
    assert set(report["per_loss"]) == {"ner/hierarchical", "re/hierarchical"}
