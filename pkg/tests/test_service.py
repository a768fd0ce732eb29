import socket
import threading
import time
import warnings

import httpx
import pytest
import uvicorn

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from stomsfem.service.app import app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def overrides(tmp_path, **extra):
    o = {"grid": {"coarse_nx": 8, "coarse_ny": 8, "refine": 4}, "surrogate": {"nodes_per_dim": 3},
         "estimator": {"n_samples": 4}, "output_dir": str(tmp_path / "out")}
    o.update(extra)
    return o


def test_health_and_presets(client):
    assert client.get("/health").json() == {"status": "ok"}
    names = client.get("/presets").json()["presets"]
    assert {"patch_study", "high_contrast", "gaussian_short_corr"} <= set(names)
    assert "coarse_nx: 64" in client.get("/presets/gaussian_short_corr").json()["yaml"]
    assert client.get("/presets/nope").status_code == 404


def test_offline_estimate_compare_report(client, tmp_path):
    body = {"preset": "patch_study", "overrides": overrides(tmp_path)}
    r = client.post("/offline", json=body)
    assert r.status_code == 200 and r.json()["n_patches"] == 64
    r = client.post("/estimate", json={**body, "build_offline": False, "calibrate_cost": False})
    assert r.status_code == 200
    assert set(r.json()["outputs"]) == {"mean", "std", "cost"}
    r = client.post("/compare", json={**body, "against": "msfem_direct", "n_samples": 2})
    assert r.status_code == 200 and [row["N"] for row in r.json()["rows"]] == [1, 2]
    r = client.post("/report", json={"output_dir": str(tmp_path / "out")})
    assert r.status_code == 200 and "errors" in r.json()["report"]


def test_error_codes(client, tmp_path):
    body = {"preset": "patch_study", "overrides": overrides(tmp_path)}
    assert client.post("/estimate", json={**body, "build_offline": False}).status_code == 409
    assert client.post("/estimate", json={"preset": "nope"}).status_code == 422
    assert client.post("/estimate", json={"preset": "patch_study", "config_path": "x.yaml"}).status_code == 422
    assert client.post("/estimate", json={"config_path": str(tmp_path / "missing.yaml")}).status_code == 404
    sc = {**body, "overrides": overrides(tmp_path, method="msfem_direct"), "kind": "sc"}
    sc["overrides"]["medium"] = {"kind": "affine", "geometry": None,
                                 "modes": [{"kind": "constant", "distribution": {"kind": "gaussian"}}]}
    assert client.post("/estimate", json=sc).status_code == 400
    direct = {**body, "overrides": overrides(tmp_path, method="fine_fem")}
    assert client.post("/offline", json=direct).status_code == 400
    assert client.post("/report", json={"output_dir": str(tmp_path / "nowhere")}).status_code == 404


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_live_server_round_trip():
    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning"))
    th = threading.Thread(target=server.run, daemon=True)
    th.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        r = httpx.get(f"http://127.0.0.1:{port}/health")
        assert r.json() == {"status": "ok"}
    finally:
        server.should_exit = True
        th.join(timeout=5)
