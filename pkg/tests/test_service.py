"""HTTP service endpoints through the in-process test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ifirtune import __version__
from ifirtune.lti import TransferFunction, zoh_discretize
from ifirtune.service.app import app
from ifirtune.vrft import apply_filter

TS = 0.05


@pytest.fixture(scope="module")
def client():
    return TestClient(app, raise_server_exceptions=False)


@pytest.fixture(scope="module")
def first_order_data():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(800)
    plant = zoh_discretize(
        TransferFunction([1.0], [1.0, 1.0], "continuous").to_ss(), TS).to_tf()
    y = apply_filter(plant, u)
    return {"u": u.tolist(), "y": y.tolist(), "ts": TS}


def synth_payload(data, **overrides):
    payload = {
        "objective": "1dof",
        "data": data,
        "mr": {"num": [2.0], "den": [1.0, 2.0], "domain": "continuous"},
        "m_fb": 8,
    }
    payload.update(overrides)
    return payload


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "version": __version__}


def test_synthesize_unconstrained(client, first_order_data):
    resp = client.post("/synthesize", json=synth_payload(first_order_data))
    assert resp.status_code == 200
    body = resp.json()
    assert body["solver_status"] == "least_squares"
    assert body["objective_value"] < 1e-12
    assert len(body["controller"]["g_fb"]) == 8
    assert body["certificate"] is None


def test_synthesize_constrained_with_certificate(client, first_order_data):
    constraints = {"case": "B", "nu1": 0.0, "rho1": 0.0,
                   "sampling_m": 500, "h0": 2.0, "h": 0.8}
    resp = client.post("/synthesize", json=synth_payload(
        first_order_data, constraints=constraints, dense_grid=2000))
    assert resp.status_code == 200
    body = resp.json()
    assert body["certificate"]["passed"] is True
    assert body["certificate"]["margin"] >= 0.0
    assert body["controller"]["gamma"] >= 0.0


def test_synthesize_rejects_bad_objective(client, first_order_data):
    resp = client.post("/synthesize", json=synth_payload(
        first_order_data, objective="nope"))
    assert resp.status_code == 422


def test_synthesize_rejects_contradictory_spec(client, first_order_data):
    # half-plane case with a negative plant index is outside its premise
    constraints = {"case": "B", "nu1": -0.5, "rho1": 0.0}
    resp = client.post("/synthesize", json=synth_payload(
        first_order_data, constraints=constraints))
    assert resp.status_code == 422


def test_synthesize_rejects_undersampled_constraints(client,
                                                     first_order_data):
    constraints = {"case": "B", "nu1": 0.0, "sampling_m": 1}
    resp = client.post("/synthesize", json=synth_payload(
        first_order_data, constraints=constraints))
    assert resp.status_code == 422


def test_synthesize_infeasible_returns_409(client, first_order_data):
    # tight decay envelope cannot reach the region around 1/(2 rho_c)
    constraints = {"case": "A", "nu1": -0.4, "rho1": 0.0,
                   "sampling_m": 400, "h0": 0.1, "h": 0.5}
    resp = client.post("/synthesize", json=synth_payload(
        first_order_data, constraints=constraints,
        integrator="fixed_zero", m_fb=5))
    assert resp.status_code == 409
    assert resp.json()["detail"]["reason"] == "infeasible"


def test_verify_pass_and_fail(client):
    constraints = {"case": "B", "nu1": 0.0, "rho1": 0.0, "sampling_m": 200}
    good = {"gamma": 0.0, "g_fb": [0.5, 0.1], "g_ff": [], "ts": TS}
    resp = client.post("/verify", json={"controller": good,
                                        "constraints": constraints})
    assert resp.status_code == 200 and resp.json()["passed"]
    bad = {"gamma": 0.0, "g_fb": [-0.5], "g_ff": [], "ts": TS}
    resp = client.post("/verify", json={"controller": bad,
                                        "constraints": constraints})
    assert resp.status_code == 200 and not resp.json()["passed"]


def test_verify_rejects_unknown_fields(client):
    resp = client.post("/verify", json={"controller": {
        "gamma": 0.0, "g_fb": [0.1], "g_ff": [], "ts": TS, "extra": 1},
        "constraints": {"case": "B"}})
    assert resp.status_code == 422


def test_simulate_open_loop(client):
    resp = client.post("/simulate", json={"scenario": {"horizon": 1.0}})
    assert resp.status_code == 200
    body = resp.json()
    assert body["stable"] is True
    assert len(body["t"]) == 100
    assert len(body["y_pos"]) == 100


def test_simulate_with_controller(client):
    ctrl = {"gamma": 0.0136, "g_fb": [0.3979], "g_ff": [], "ts": 0.01}
    resp = client.post("/simulate", json={
        "controller": ctrl, "scenario": {"horizon": 1.0, "dist_start": 0.5}})
    assert resp.status_code == 200
    body = resp.json()
    assert body["spectral_radius"] == pytest.approx(1.0, abs=1e-9)


def test_bench_small_grid(client):
    resp = client.post("/bench", json={"m_fb_grid": [3, 5],
                                       "sampling_grid": [20],
                                       "repeats": 1})
    assert resp.status_code == 200
    rows = resp.json()["rows"]
    assert len(rows) == 2
    assert all(r["solve_time"] > 0 for r in rows)


def test_bench_rejects_bad_grid(client):
    resp = client.post("/bench", json={"m_fb_grid": [],
                                       "sampling_grid": [20]})
    assert resp.status_code == 422
