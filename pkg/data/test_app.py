import pytest

from app import app


@pytest.fixture
def client():
    app.config["TESTING"] = True
    with app.test_client() as c:
        yield c


def test_home(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.get_json()["message"] == "Mission planning backend is running!"


def test_scenarios_lists_shipped_files(client):
    names = {s["name"] for s in client.get("/scenarios").get_json()}
    assert {"planar_inspection", "cubesat_inspection"} <= names


def test_parse_spec(client):
    response = client.post("/parse_spec", json={"spec": "F[0,5] x >= 1 & G[2,8] y <= 0", "dims": ["x", "y"]})
    assert response.status_code == 200
    data = response.get_json()
    assert data["horizon"] == 8.0
    assert data["dims_used"] == ["x", "y"]


def test_parse_spec_reports_syntax_errors(client):
    response = client.post("/parse_spec", json={"spec": "F[0,1] x >=", "dims": ["x"]})
    assert response.status_code == 400
    assert "column" in response.get_json()["error"]


@pytest.mark.parametrize("route", ["/parse_spec", "/robustness", "/plan", "/pipeline"])
def test_missing_body_fields(client, route):
    assert client.post(route, json={}).status_code == 400


def test_robustness(client):
    body = {"spec": "F[0,2] x >= 1", "dims": ["x"], "dt": 1.0, "values": [[0.0], [1.5], [0.5]]}
    data = client.post("/robustness", json=body).get_json()
    assert data["rho"] == pytest.approx(0.5)
    assert data["satisfied"] and not data["boundary"]


def test_unknown_scenario_is_a_bad_request(client):
    response = client.post("/plan", json={"scenario": "no_such_scenario"})
    assert response.status_code == 400
    assert response.get_json()["stage"] == "scenario"


def test_infeasible_plan_is_unprocessable(client, unreachable_scenario_path):
    response = client.post("/plan", json={"scenario": unreachable_scenario_path})
    assert response.status_code == 422
    assert response.get_json()["stage"] == "planner"
