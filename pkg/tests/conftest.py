"""Shared fixtures for the test suite."""

import math

import numpy as np
import pytest

from app.core.config import settings
from app.services.measurement import SignMatrix
from app.services.mechanism import Mechanism


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Keep log files and default result files out of the working tree."""
    monkeypatch.setattr(settings, "log_dir", tmp_path / "logs")
    monkeypatch.setattr(settings, "results_dir", tmp_path / "results")


@pytest.fixture
def sign_matrix():
    """Factory building a SignMatrix from explicit -1/+1 rows."""

    def build(rows, **kwargs) -> SignMatrix:
        return SignMatrix.from_signs(np.array(rows), **kwargs)

    return build


@pytest.fixture
def two_by_two_mechanism(sign_matrix) -> Mechanism:
    """k=2, m=2, A = [[+1, -1], [-1, +1]], e^eps = 3."""
    return Mechanism(sign_matrix([[1, -1], [-1, 1]]), math.log(3.0), enforce_range=False)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
