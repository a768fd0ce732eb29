import json
import socket
import threading
import time

import pytest
import uvicorn
import yaml

from stomsfem.cli import build_parser, main, parse_set
from stomsfem.service.app import app


def small_args(tmp_path):
    return ["--preset", "patch_study", "--set", "grid.coarse_nx=8", "--set", "grid.coarse_ny=8",
            "--set", "grid.refine=4", "--set", "surrogate.nodes_per_dim=3",
            "--set", f"output_dir={tmp_path / 'out'}"]


def test_parse_set_builds_nested_values():
    assert parse_set(["grid.refine=4", "seed=3", "problem.boundary.kind=lines", "x=0.5"]) == {
        "grid": {"refine": 4}, "seed": 3, "problem": {"boundary": {"kind": "lines"}}, "x": 0.5}


def test_preset_prints_loadable_yaml(capsys):
    assert main(["preset", "high_contrast"]) == 0
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["grid"]["coarse_nx"] == 20


def test_unknown_preset_fails(capsys):
    assert main(["preset", "nope"]) == 2
    assert "unknown preset" in capsys.readouterr().err


def test_online_before_offline_fails(tmp_path, capsys):
    assert main(["online", *small_args(tmp_path), "--no-calibrate"]) == 1
    assert "409" in capsys.readouterr().err


def test_offline_online_compare_report(tmp_path, capsys):
    args = small_args(tmp_path)
    assert main(["offline", *args]) == 0
    assert json.loads(capsys.readouterr().out)["n_patches"] == 64
    assert main(["online", *args, "--n-samples", "4", "--no-calibrate"]) == 0
    capsys.readouterr()
    assert (tmp_path / "out" / "mean.csv").exists() and (tmp_path / "out" / "cost.json").exists()
    assert main(["estimate", *args, "--method", "mc2", "--n-samples", "3", "--set", "estimator.n_fine=2",
                 "--no-calibrate"]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["estimator"] == "two_level_mc"
    assert main(["compare", *args, "--against", "msfem_direct", "--n-samples", "2"]) == 0
    capsys.readouterr()
    assert (tmp_path / "out" / "errors.csv").read_text().startswith("method,N,error")
    assert main(["report", "--output-dir", str(tmp_path / "out")]) == 0
    rep = json.loads(capsys.readouterr().out)["report"]
    assert rep["errors"][0][0] == "stomsfem_interp"


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"preset": "patch_study", "method": "msfem_direct",
                                   "grid": {"coarse_nx": 4, "coarse_ny": 4, "refine": 4},
                                   "output_dir": str(tmp_path / "o")}))
    assert main(["estimate", "--config", str(cfg), "--n-samples", "2", "--no-calibrate"]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["n_samples"] == 2


def test_missing_config_source_exits():
    with pytest.raises(SystemExit):
        main(["estimate"])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["estimate", "--method", "qmc"])


def test_remote_url(tmp_path, capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    th = threading.Thread(target=server.run, daemon=True)
    th.start()
    try:
        while not server.started:
            time.sleep(0.05)
        cfg = ["--preset", "patch_study", "--set", "method=msfem_direct", "--set", "grid.coarse_nx=4",
               "--set", "grid.coarse_ny=4", "--set", "grid.refine=2", "--set", f"output_dir={tmp_path}"]
        assert main(["estimate", *cfg, "--n-samples", "2", "--no-calibrate", "--url", f"http://127.0.0.1:{port}"]) == 0
        assert json.loads(capsys.readouterr().out)["summary"]["method"] == "msfem_direct"
    finally:
        server.should_exit = True
        th.join(timeout=5)
