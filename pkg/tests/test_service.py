import pytest
import yaml
from starlette.testclient import TestClient

from encloop.service.app import create_app
from test_config_pipeline import CONFIGS, scalar_config


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def linear_payload(**overrides):
    return {"config": yaml.safe_load((CONFIGS / "linear_lwe.yaml").read_text())}


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200 and resp.json() == {"status": "ok"}


def test_convert_scalar_example(client):
    cfg = scalar_config().model_dump(mode="json")
    resp = client.post("/convert", json={"config": cfg})
    assert resp.status_code == 200
    data = resp.json()
    assert data["status"] == "ok"
    conv = data["conversion"]
    assert "500 * u[1]" in conv["encoded"] and "2000 * y[1]" in conv["encoded"]
    assert conv["L"] == pytest.approx(1e-6)
    assert data["certification"]["ok"]
    # normalized config reloads to the same model
    again = yaml.safe_load(data["normalized_config"])
    resp2 = client.post("/convert", json={"config": again})
    assert resp2.json()["normalized_config"] == data["normalized_config"]


def test_convert_rejects_bad_config(client):
    resp = client.post("/convert", json={"config": {"controller": {"type": "linear"}}})
    assert resp.status_code == 422  # missing required fields
    cfg = scalar_config().model_dump(mode="json")
    cfg["controller"]["C"] = [0.0]  # no observable dynamics
    resp = client.post("/convert", json={"config": cfg})
    assert resp.status_code == 400
    assert "NoObservableDynamics" in resp.json()["detail"]


def test_certify_failure_status(client):
    cfg = scalar_config(crypto={"plaintext_modulus": 64}).model_dump(mode="json")
    resp = client.post("/certify", json={"config": cfg})
    assert resp.status_code == 200
    data = resp.json()
    assert data["status"] == "certification_failed"
    assert not data["certification"]["plaintext_ok"]
    assert data["certification"]["messages"]


def test_simulate_ok_and_deterministic(client):
    payload = {**linear_payload(), "mode": "encrypted", "steps": 120}
    a = client.post("/simulate", json=payload).json()
    b = client.post("/simulate", json=payload).json()
    assert a["status"] == "ok"
    assert a["summary"]["steps"] == 120
    assert a["summary"]["min_noise_budget_bits"] > 0
    assert a["trace_csv"] == b["trace_csv"]  # byte-identical for fixed seed
    header = a["trace_csv"].splitlines()[0]
    assert header == "t,y1,u_nom,u_q,u_enc,ubar_prime,noise_budget_bits,step_us"


def test_simulate_assert_exact(client):
    payload = {**linear_payload(), "mode": "encrypted", "steps": 80, "assert_exact": True}
    assert client.post("/simulate", json=payload).json()["status"] == "ok"


def test_simulate_certification_gate_and_override(client):
    cfg = scalar_config(crypto={"plaintext_modulus": 64})
    resp = client.post(
        "/simulate",
        json={"config": cfg.model_dump(mode="json"), "mode": "encrypted", "steps": 50},
    ).json()
    assert resp["status"] == "certification_failed"
    assert resp["error"]["kind"] == "CertificationFailure"

    forced = scalar_config(crypto={"plaintext_modulus": 64, "allow_uncertified": True})
    resp = client.post(
        "/simulate",
        json={"config": forced.model_dump(mode="json"), "mode": "quantized", "steps": 50},
    ).json()
    assert resp["status"] == "runtime_failure"
    assert resp["error"]["kind"] == "PlaintextOverflow"
    assert resp["error"]["step"] is not None


def test_sweep_endpoint(client):
    cfg = scalar_config(run={"steps": 300}).model_dump(mode="json")
    resp = client.post(
        "/sweep", json={"config": cfg, "r_values": [1e-1, 1e-2, 1e-3], "steps": 300}
    )
    assert resp.status_code == 200
    data = resp.json()
    rows = data["rows"]
    assert [row["status"] for row in rows] == ["ok"] * 3
    assert rows[2]["max_abs_err"] < rows[0]["max_abs_err"]
    assert data["csv"].startswith("r,s,max_abs_err")


def test_compare_endpoint_quantized_vs_encrypted(client):
    enc = client.post(
        "/simulate", json={**linear_payload(), "mode": "encrypted", "steps": 100}
    ).json()
    quant = client.post(
        "/simulate", json={**linear_payload(), "mode": "quantized", "steps": 100}
    ).json()
    resp = client.post(
        "/compare",
        json={
            "trace_csv_a": enc["trace_csv"],
            "trace_csv_b": quant["trace_csv"],
            "channel": "u_q",
        },
    ).json()
    assert resp["max_abs_err"] == 0.0
    assert resp["steps"] == 100
    bad = client.post(
        "/compare",
        json={"trace_csv_a": enc["trace_csv"], "trace_csv_b": "nonsense", "channel": "u"},
    )
    assert bad.status_code == 400


def test_request_models_reject_unknown_fields(client):
    payload = {**linear_payload(), "bogus": 1}
    assert client.post("/simulate", json=payload).status_code == 422
