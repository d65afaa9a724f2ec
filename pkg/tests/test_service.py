import numpy as np
import pytest
from fastapi.testclient import TestClient

from fedexsim import models, oracle
from fedexsim.service import create_app


@pytest.fixture
def client(victim):
    orc = oracle.PredictionOracle(victim, budget=20)
    return TestClient(create_app(orc)), orc


def test_health(client):
    http, _ = client
    resp = http.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_model_info(client):
    http, _ = client
    info = http.get("/model").json()
    assert info == {"input_shape": [8], "class_count": 3, "mode": "probability_vector"}


def test_budget_endpoint_tracks_usage(client, rng):
    http, orc = client
    assert http.get("/budget").json() == {"budget": 20, "used": 0, "remaining": 20}
    http.post("/predict", json={"input": list(rng.standard_normal(8))})
    assert http.get("/budget").json() == {"budget": 20, "used": 1, "remaining": 19}


def test_predict_matches_model(client, victim, rng):
    http, _ = client
    x = rng.standard_normal(8)
    resp = http.post("/predict", json={"input": list(x)})
    assert resp.status_code == 200
    expected = models.predict(victim, x[None])[0]
    assert np.allclose(resp.json()["probs"], expected, atol=1e-12)


def test_predict_batch(client, victim, rng):
    http, orc = client
    x = rng.standard_normal((3, 8))
    resp = http.post("/predict/batch", json={"inputs": [list(r) for r in x]})
    assert resp.status_code == 200
    got = np.array([r["probs"] for r in resp.json()["results"]])
    assert np.allclose(got, models.predict(victim, x), atol=1e-12)
    assert orc.ledger.used == 3


def test_wrong_shape_is_422_and_free(client, rng):
    http, orc = client
    resp = http.post("/predict", json={"input": list(rng.standard_normal(7))})
    assert resp.status_code == 422
    assert orc.ledger.used == 0


def test_budget_exhaustion_is_429(victim, rng):
    orc = oracle.PredictionOracle(victim, budget=2)
    http = TestClient(create_app(orc))
    x = list(rng.standard_normal(8))
    assert http.post("/predict", json={"input": x}).status_code == 200
    assert http.post("/predict", json={"input": x}).status_code == 200
    resp = http.post("/predict", json={"input": x})
    assert resp.status_code == 429
    assert orc.ledger.remaining == 0


def test_batch_atomic_over_http(victim, rng):
    orc = oracle.PredictionOracle(victim, budget=5)
    http = TestClient(create_app(orc))
    rows = [list(r) for r in rng.standard_normal((6, 8))]
    assert http.post("/predict/batch", json={"inputs": rows}).status_code == 429
    # rejected batch must not consume budget
    assert orc.ledger.used == 0
    assert http.post("/predict/batch", json={"inputs": rows[:5]}).status_code == 200


def test_hard_label_mode(victim, rng):
    orc = oracle.PredictionOracle(victim, budget=5, mode="hard_label")
    http = TestClient(create_app(orc))
    x = rng.standard_normal(8)
    resp = http.post("/predict", json={"input": list(x)}).json()
    assert resp["probs"] is None
    assert resp["label"] == int(np.argmax(models.predict(victim, x[None])[0]))


def test_malformed_body_is_422(client):
    http, orc = client
    assert http.post("/predict", json={"wrong": 1}).status_code == 422
    assert orc.ledger.used == 0
