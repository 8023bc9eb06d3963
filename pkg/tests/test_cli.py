"""End-to-end command-line behavior on small configurations."""

import json
import os

import pytest

from fpsim.cli import main

SMALL = {
    "seed": 5,
    "clients": 2,
    "rounds": 2,
    "local_epochs": 1,
    "warmup": 1,
    "batch_size": 16,
    "strategies": ["standard", "proposed"],
    "pruning_rates": [0.3],
    "data": {"train": 48, "test": 24, "reference": 8, "classes": 4,
             "shape": [3, 16, 16]},
    "arch": {"conv_channels": [4], "dense_units": [8]},
}


def write_cfg(tmp_path, overrides=None, name="cfg.json"):
    cfg = json.loads(json.dumps(SMALL))
    if overrides:
        cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_minimal_run_single_data_row(tmp_path):
    cfg_path = write_cfg(
        tmp_path,
        {"rounds": 1, "warmup": 1, "strategies": ["standard"]},
    )
    outdir = tmp_path / "out"
    assert main(["run", cfg_path, "--outdir", str(outdir)]) == 0
    lines = (outdir / "records.csv").read_text().strip().split("\n")
    assert lines[0] == ("round,strategy,q,map,uplink_bytes,downlink_bytes,"
                        "pruned_fraction,wall_ms")
    assert len(lines) == 2
    assert lines[1].startswith("1,standard,0,")
    assert lines[1].endswith(",0")  # wall_ms suppressed by default


def test_run_emits_summary_and_plot(tmp_path):
    cfg_path = write_cfg(tmp_path)
    outdir = tmp_path / "out"
    assert main(["run", cfg_path, "--outdir", str(outdir)]) == 0
    summary = (outdir / "summary.csv").read_text().strip().split("\n")
    assert summary[0] == "strategy,q,final_map"
    assert len(summary) == 3  # standard + proposed@0.3
    assert summary[1].startswith("standard,0,")
    assert summary[2].startswith("proposed,0.3,")
    svg = (outdir / "map_vs_round.svg").read_text()
    assert svg.lstrip().startswith("<?xml")


def test_runs_are_byte_identical(tmp_path):
    cfg_path = write_cfg(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg_path, "--outdir", str(out1)]) == 0
    assert main(["run", cfg_path, "--outdir", str(out2)]) == 0
    assert (out1 / "records.csv").read_bytes() == \
        (out2 / "records.csv").read_bytes()
    assert (out1 / "map_vs_round.svg").read_bytes() == \
        (out2 / "map_vs_round.svg").read_bytes()


def test_parallel_cells_match_sequential(tmp_path):
    cfg_path = write_cfg(tmp_path)
    seq, par = tmp_path / "seq", tmp_path / "par"
    assert main(["run", cfg_path, "--outdir", str(seq)]) == 0
    assert main(["run", cfg_path, "--outdir", str(par), "--parallel"]) == 0
    assert (seq / "records.csv").read_bytes() == \
        (par / "records.csv").read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg_path = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg_path, "--outdir", str(a)]) == 0
    assert main(["run", cfg_path, "--outdir", str(b), "--seed", "99"]) == 0
    assert (a / "records.csv").read_text() != (b / "records.csv").read_text()


def test_keep_timing_records_wall_ms(tmp_path):
    cfg_path = write_cfg(
        tmp_path, {"rounds": 1, "strategies": ["standard"]}
    )
    outdir = tmp_path / "out"
    assert main(["run", cfg_path, "--outdir", str(outdir),
                 "--keep-timing"]) == 0
    row = (outdir / "records.csv").read_text().strip().split("\n")[1]
    wall = float(row.split(",")[-1])
    assert wall > 0.0


def test_validate_prints_effective_config(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path)
    assert main(["validate", cfg_path]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["seed"] == 5
    assert printed["learning_rate"] == pytest.approx(1e-3)  # default filled
    assert printed["data"]["alpha"] == pytest.approx(0.5)


def test_validate_rejects_bad_config_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"warmup": 10, "rounds": 3}')
    assert main(["validate", str(path)]) == 2
    assert "warmup" in capsys.readouterr().err


def test_run_rejects_bad_config_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"rounds": 0}')
    assert main(["run", str(path), "--outdir", str(tmp_path / "o")]) == 2


def test_run_runtime_failure_exit_1(tmp_path, monkeypatch):
    cfg_path = write_cfg(tmp_path, {"rounds": 1, "strategies": ["standard"]})
    target = tmp_path / "blocked"
    target.write_text("a file, not a directory")
    assert main(["run", cfg_path, "--outdir", str(target)]) == 1


def test_fpsim_threads_env_does_not_change_output(tmp_path, monkeypatch):
    cfg_path = write_cfg(tmp_path, {"clients": 3})
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("FPSIM_THREADS", threads)
        outdir = tmp_path / f"t{threads}"
        assert main(["run", cfg_path, "--outdir", str(outdir)]) == 0
        outs.append((outdir / "records.csv").read_bytes())
    assert outs[0] == outs[1]
