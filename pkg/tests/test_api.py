import pytest
from fastapi.testclient import TestClient

from main import app


@pytest.fixture
def client():
    return TestClient(app)


def test_health(client):
    assert client.get("/").json() == {"status": "ok", "service": "meanvalue"}
    body = client.get("/health").json()
    assert body["status"] == "healthy"
    assert body["experiments"] >= 10


def test_list_experiments(client):
    response = client.get("/api/v1/experiments")
    assert response.status_code == 200
    ids = [item["id"] for item in response.json()]
    assert "ex-0-1" in ids
    assert "inequalities" in ids


def test_run_experiment(client, tmp_path):
    response = client.post(
        "/api/v1/experiments/run",
        json={"experiment_id": "ex-0-1", "params": {"ks": "1"}, "out_dir": str(tmp_path)},
    )
    assert response.status_code == 200
    [result] = response.json()
    assert result["passed"] is True
    assert result["config"]["params"] == {"ks": "1", "shift": 1.0}


def test_run_unknown_experiment(client):
    response = client.post("/api/v1/experiments/run", json={"experiment_id": "ex-9"})
    assert response.status_code == 404


def test_run_with_unknown_parameter(client, tmp_path):
    response = client.post(
        "/api/v1/experiments/run",
        json={"experiment_id": "ex-0-1", "params": {"bogus": 1}, "out_dir": str(tmp_path)},
    )
    assert response.status_code == 400


def test_total_variation_of_a_uniform(client):
    response = client.post(
        "/api/v1/measures/total-variation",
        json={"evaluation": {"kind": "uniform", "parameters": {"a": 0, "b": 4}}, "s_values": [0, 1, 8]},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["kind"] == "uniform"
    assert [point["tv"] for point in body["points"]] == pytest.approx([0.0, 0.25, 1.0])


def test_bad_evaluation_is_a_bad_request(client):
    response = client.post(
        "/api/v1/measures/total-variation",
        json={"evaluation": {"kind": "uniform", "parameters": {"a": 3, "b": 1}}, "s_values": [1]},
    )
    assert response.status_code == 400
    response = client.post(
        "/api/v1/measures/total-variation",
        json={"evaluation": {"kind": "cauchy"}, "s_values": [1]},
    )
    assert response.status_code == 400


def test_ltc_rows(client):
    family = [{"kind": "uniform", "parameters": {"a": 0, "b": k}} for k in (1, 2, 4)]
    response = client.post("/api/v1/measures/ltc", json={"family": family, "S": 1.0, "grid_n": 33})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert [row["k"] for row in rows] == [1, 2, 3]
    assert [row["sup_tv"] for row in rows] == pytest.approx([1.0, 0.5, 0.25], abs=1e-9)


def test_value_endpoint(client):
    response = client.post(
        "/api/v1/values/value",
        json={
            "system": "bang-cost",
            "y0": [0.0],
            "evaluation": {"kind": "uniform", "parameters": {"a": 0, "b": 10}},
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["value"] == pytest.approx(0.5, abs=1e-6)
    assert body["bias"] == "exact_oracle"
    assert body["witness"]["values"] == [1.0, -1.0]
    assert body["witness"]["breakpoints"] == pytest.approx([0.0, 5.0])


def test_value_endpoint_rejects_unknown_systems(client):
    response = client.post(
        "/api/v1/values/value",
        json={"system": "pendulum", "y0": [0.0], "evaluation": {"kind": "exponential", "parameters": {"rate": 1}}},
    )
    assert response.status_code == 400


def test_value_request_validation(client):
    response = client.post(
        "/api/v1/values/value",
        json={"system": "stable-point", "y0": [], "evaluation": {"kind": "exponential", "parameters": {"rate": 1}}},
    )
    assert response.status_code == 422
