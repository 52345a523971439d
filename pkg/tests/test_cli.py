from __future__ import annotations

import json

import numpy as np
import pytest

from ground3d.cli import main
from ground3d.rendering import load_png

from .e2ekit import QUERIES


@pytest.fixture
def mock_env(e2e_world, monkeypatch):
    monkeypatch.setenv("MCM_BACKEND", f"mock:{e2e_world.store.root}")
    return e2e_world


def test_ground_writes_result_json(mock_env, tmp_path, capsys):
    spec = QUERIES[4]
    out = tmp_path / "result.json"
    code = main([
        "ground", "--scene", str(mock_env.bundle_dir),
        "--query", spec.text, "--out", str(out),
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["status"] == "grounded"
    assert payload["scene_id"] == "room0"
    assert payload["proposal_id"] == spec.gt_pid
    assert payload["box"]["min"] == pytest.approx(list(mock_env.gt_box(spec.gt_pid).lo))


def test_ground_prints_to_stdout_by_default(mock_env, capsys):
    spec = QUERIES[6]
    code = main(["ground", "--scene", str(mock_env.bundle_dir), "--query", spec.text])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["status"] == "grounded"


def test_ground_trace_dir(mock_env, tmp_path):
    spec = QUERIES[4]
    trace = tmp_path / "trace"
    out = tmp_path / "r.json"
    code = main([
        "ground", "--scene", str(mock_env.bundle_dir), "--query", spec.text,
        "--trace", str(trace), "--out", str(out),
    ])
    assert code == 0
    assert (trace / "parse.json").exists()
    assert json.loads(out.read_text())["trace_dir"] == str(trace)


def test_missing_scene_flag_is_usage_error(capsys):
    assert main(["ground", "--query", "x"]) == 1


def test_unknown_subcommand_is_usage_error():
    assert main(["frobnicate"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0


def test_ground_error_status_exits_two(mock_env, tmp_path, monkeypatch):
    # point the backend at an empty fixtures dir: the parse phase fails
    monkeypatch.setenv("MCM_BACKEND", f"mock:{tmp_path / 'nothing'}")
    out = tmp_path / "r.json"
    code = main([
        "ground", "--scene", str(mock_env.bundle_dir), "--query", "whatever",
        "--out", str(out),
    ])
    assert code == 2
    assert json.loads(out.read_text())["status"] == "error"


def test_eval_over_reference_fixture(mock_env, tmp_path):
    refs = tmp_path / "refs.json"
    refs.write_text(json.dumps(mock_env.references()))
    out = tmp_path / "report.json"
    code = main([
        "eval", "--scenes", str(mock_env.bundle_dir.parent),
        "--refs", str(refs), "--out", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["n"] == 12
    assert report["acc_025"] == 1.0
    assert report["acc_05"] == 1.0
    assert report["per_tag"]["split=multiple"]["n"] == 4


def test_eval_counts_refusal_as_miss(mock_env, tmp_path):
    refs = tmp_path / "refs13.json"
    refs.write_text(json.dumps(mock_env.references(include_refused=True)))
    out = tmp_path / "report.json"
    code = main([
        "eval", "--scenes", str(mock_env.bundle_dir.parent),
        "--refs", str(refs), "--out", str(out), "--workers", "2",
    ])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["n"] == 13
    assert report["acc_025"] == pytest.approx(12 / 13)
    assert report["items"][-1]["status"] == "no_match"


def test_render_bev_command(mock_env, tmp_path, capsys):
    out = tmp_path / "bev.png"
    code = main([
        "render-bev", "--scene", str(mock_env.bundle_dir),
        "--highlight", "4,12", "--out", str(out),
    ])
    assert code == 0
    img = load_png(out)
    assert img.ndim == 3
    assert np.all(np.array(img.shape[:2]) > 100)
    assert "wrote" in capsys.readouterr().out


def test_inspect_command(mock_env, capsys):
    code = main(["inspect", "--scene", str(mock_env.bundle_dir)])
    assert code == 0
    out = capsys.readouterr().out
    assert "room0" in out
    assert "chair" in out and "lamp" in out


def test_config_flag_overrides_file(mock_env, tmp_path):
    # the file alone is invalid (gamma out of range); the flag must win
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gamma": 1.5}))
    out = tmp_path / "r.json"
    args = ["ground", "--scene", str(mock_env.bundle_dir), "--query", QUERIES[4].text,
            "--config", str(cfg), "--out", str(out)]
    assert main(args) == 2  # file value rejected
    code = main(args + ["--gamma", "0.07"])
    assert code == 0
    assert json.loads(out.read_text())["status"] == "grounded"
