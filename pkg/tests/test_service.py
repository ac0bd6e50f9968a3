"""HTTP facade: endpoints, exact string values, error mapping."""

import pytest
from fastapi.testclient import TestClient

from mdpmc import __version__
from mdpmc.formats import parse_model, write_model
from mdpmc.gen import gen_hard_mn, gen_pi_trap
from mdpmc.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


class TestHealth:
    def test_reports_version(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "version": __version__}


class TestCheck:
    def test_exact_value_travels_as_string(self, client):
        r = client.post(
            "/check",
            json={
                "model": write_model(gen_hard_mn(5)),
                "objective": "reach:min:goal",
                "algorithm": "pi[evaluator=exact]",
            },
        )
        assert r.status_code == 200
        body = r.json()
        assert body["value"] == "1/3"
        assert body["solver_status"] == "exact"
        assert body["num_states"] == 11
        assert body["num_core"] > 0
        assert body["solve_ms"] >= 0

    def test_certified_bounds_included(self, client):
        r = client.post(
            "/check",
            json={
                "model": write_model(gen_pi_trap("1/10")),
                "objective": "reach:max:goal",
                "algorithm": "ovi[epsilon=1e-6]",
            },
        )
        body = r.json()
        assert body["solver_status"] == "certified"
        assert body["lower"] is not None and body["upper"] is not None
        assert float(eval_frac(body["lower"])) <= 0.5 <= float(eval_frac(body["upper"]))

    def test_bad_model_is_400(self, client):
        r = client.post(
            "/check",
            json={"model": "states 1\n", "objective": "reach:max:goal"},
        )
        assert r.status_code == 400
        assert "detail" in r.json()

    def test_bad_algorithm_is_400(self, client):
        r = client.post(
            "/check",
            json={
                "model": write_model(gen_hard_mn(2)),
                "objective": "reach:max:goal",
                "algorithm": "vi[bogus=1]",
            },
        )
        assert r.status_code == 400

    def test_timeout_is_408_with_iterations(self, client):
        r = client.post(
            "/check",
            json={
                "model": write_model(gen_hard_mn(20)),
                "objective": "reach:min:goal",
                "algorithm": "vi[epsilon=1e-20]",
                "timeout": 0.05,
            },
        )
        assert r.status_code == 408
        assert r.json()["iterations"] > 0


class TestGenerate:
    def test_hard_chain(self, client):
        r = client.post("/generate", json={"family": "hard-mn", "params": {"n": 20}})
        assert r.status_code == 200
        body = r.json()
        assert body["states"] == 41
        assert parse_model(body["model"]).num_states == 41

    def test_unknown_family_is_400(self, client):
        r = client.post("/generate", json={"family": "spiral"})
        assert r.status_code == 400

    def test_random_family_deterministic(self, client):
        payload = {"family": "random", "params": {"seed": 9, "num_states": 8}}
        a = client.post("/generate", json=payload).json()
        b = client.post("/generate", json=payload).json()
        assert a["model"] == b["model"]


class TestBenchAndHardness:
    def test_suite_round_trip(self, client, tmp_path):
        (tmp_path / "m.model").write_text(write_model(gen_hard_mn(3)))
        suite = "m.model reach:min:goal pi[evaluator=exact] 1/3\nm.model reach:max:goal vi -\n"
        r = client.post(
            "/bench", json={"suite": suite, "timeout": 30.0, "base_dir": str(tmp_path)}
        )
        assert r.status_code == 200
        body = r.json()
        assert body["rows"] == 2
        lines = body["csv"].strip().split("\n")
        assert lines[0].startswith("model,objective,algorithm")
        assert ",correct," in lines[1]
        assert ",no-reference," in lines[2]

        h = client.post(
            "/hardness",
            json={"csv": body["csv"], "floor_ms": 0.0, "base_dir": str(tmp_path)},
        )
        assert h.status_code == 200
        assert isinstance(h.json()["instances"], list)

    def test_suite_parse_error_is_400(self, client):
        r = client.post("/bench", json={"suite": "only two\n"})
        assert r.status_code == 400


def eval_frac(text: str) -> float:
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)
