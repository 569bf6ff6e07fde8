"""Tests for the HTTP surface of the collector."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.core.config import settings
from app.main import app
from app.services.harness import build_mechanism
from app.services.mechanism import privatize_many


@pytest.fixture
def client():
    with TestClient(app) as test_client:
        yield test_client


class TestHealth:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "healthy"
        assert body["app_name"] == settings.app_name

    def test_ready(self, client):
        response = client.get("/health/ready")
        assert response.status_code == 200
        assert response.json()["status"] == "ready"

    def test_api_info_lists_endpoints(self, client):
        endpoints = client.get("/api/info").json()["endpoints"]
        assert "POST /api/v1/estimate" in endpoints


class TestMechanismEndpoint:
    def test_high_privacy_channel(self, client):
        response = client.get(
            "/api/v1/mechanism", params={"k": 100, "m": 64, "epsilon": 0.5, "seed": 3, "sparsity": 2}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["regime"] == "high"
        assert body["construction"] == "rademacher"
        assert body["bits_per_report"] == 6
        assert body["required_m"] == 32
        audit = body["audit"]
        assert 0.5 <= audit["epsilon_effective"] <= audit["bound"] + 1e-12

    def test_medium_privacy_channel(self, client):
        body = client.get("/api/v1/mechanism", params={"k": 50, "m": 64, "epsilon": 2.0}).json()
        assert body["regime"] == "medium"
        assert body["construction"] == "biased"

    def test_epsilon_above_log_m(self, client):
        response = client.get("/api/v1/mechanism", params={"k": 50, "m": 64, "epsilon": 5.0})
        assert response.status_code == 400

    def test_universe_limit(self, client):
        params = {"k": settings.max_api_universe + 1, "m": 64, "epsilon": 0.5}
        assert client.get("/api/v1/mechanism", params=params).status_code == 400

    def test_query_validation(self, client):
        assert client.get("/api/v1/mechanism", params={"k": 0, "m": 64, "epsilon": 0.5}).status_code == 422


class TestEstimateEndpoint:
    def test_recovers_point_mass(self, client):
        k, m, epsilon, seed = 100, 64, 0.5, 9
        mech = build_mechanism(k, m, epsilon, seed)
        reports = privatize_many(mech, np.full(200_000, 13), seed=4)
        response = client.post("/api/v1/estimate", json={
            "k": k, "m": m, "epsilon": epsilon, "seed": seed,
            "reports": reports.tolist(), "sparsity": 1, "decoder": "project",
        })
        assert response.status_code == 200
        body = response.json()
        assert body["n"] == 200_000
        assert body["support"] == [13]
        assert len(body["phat"]) == k
        assert sum(body["phat"]) == pytest.approx(1.0)

    def test_rejects_out_of_range_reports(self, client):
        response = client.post("/api/v1/estimate", json={
            "k": 20, "m": 16, "epsilon": 0.5, "reports": [0, 3, 16], "sparsity": 1,
        })
        assert response.status_code == 400

    def test_rejects_empty_reports(self, client):
        response = client.post("/api/v1/estimate", json={
            "k": 20, "m": 16, "epsilon": 0.5, "reports": [], "sparsity": 1,
        })
        assert response.status_code == 422


class TestExperimentsEndpoint:
    def test_small_sweep(self, client):
        response = client.post("/api/v1/experiments", json={
            "k": 100, "m": 40, "epsilon": 0.5, "dist": "unif:3", "methods": ["CP", "RR"],
            "decoders": ["project"], "n_grid": [2000, 4000], "trials": 2, "seed": 5,
        })
        assert response.status_code == 200
        body = response.json()
        assert body["s"] == 3
        assert len(body["rows"]) == 4
        assert all(row["trials"] == 2 for row in body["rows"])
        assert body["metadata"]["regime"] == "high"

    def test_oversized_sweep(self, client):
        response = client.post("/api/v1/experiments", json={
            "k": 100, "m": 40, "epsilon": 0.5, "dist": "unif:3",
            "n_grid": [settings.max_api_reports + 1],
        })
        assert response.status_code == 400

    def test_invalid_spec(self, client):
        response = client.post("/api/v1/experiments", json={
            "k": 100, "m": 40, "epsilon": 0.5, "dist": "unif:3", "n_grid": [4000, 2000],
        })
        assert response.status_code == 422
