"""Discrete distributions on [k]: generators, sparsity utilities, error metrics and sampling."""

from pathlib import Path
from typing import Union

import numpy as np

from app.models.schemas import Distribution, SparsityProfile
from app.utils.helpers import SeedLike, as_generator
from app.utils.logger import get_logger

logger = get_logger(__name__)

FILE_SUM_TOLERANCE = 1e-6

VectorLike = Union[Distribution, np.ndarray, list, tuple]


def _as_vector(value: VectorLike) -> np.ndarray:
    if isinstance(value, Distribution):
        return value.probs
    return np.asarray(value, dtype=float).reshape(-1)


def make_geometric(k: int, lam: float) -> Distribution:
    """
    Truncated geometric distribution with p(i) proportional to (1 - lam)^i * lam.

    Indexing starts at i = 0 and the k retained terms are renormalized.

    Raises:
        ValueError: If k < 1 or lam is outside (0, 1)
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lam must lie in (0, 1), got {lam}")
    weights = lam * np.power(1.0 - lam, np.arange(k, dtype=float))
    return Distribution(probs=weights / weights.sum())


def make_sparse_uniform(k: int, s: int, seed: SeedLike) -> Distribution:
    """
    Uniform distribution over a random support of size s.

    Raises:
        ValueError: If s is not in [1, k]
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if not 1 <= s <= k:
        raise ValueError(f"Support size s={s} must lie in [1, k={k}]")
    rng = as_generator(seed)
    support = rng.choice(k, size=s, replace=False)
    probs = np.zeros(k)
    probs[support] = 1.0 / s
    return Distribution(probs=probs)


def load_distribution(path: Union[str, Path]) -> Distribution:
    """
    Read a distribution from a text file with one probability per line.

    The entries must sum to 1 within 1e-6; they are renormalized exactly afterwards.

    Raises:
        ValueError: If the file is empty, has negative entries, or does not sum to 1
    """
    path = Path(path)
    values = np.loadtxt(path, dtype=float, ndmin=1, comments="#")
    if values.size == 0:
        raise ValueError(f"Distribution file {path} is empty")
    if np.any(values < 0):
        raise ValueError(f"Distribution file {path} has negative entries")
    total = float(values.sum())
    if abs(total - 1.0) > FILE_SUM_TOLERANCE:
        raise ValueError(f"Distribution file {path} sums to {total}, expected 1 +/- {FILE_SUM_TOLERANCE}")
    logger.debug(f"Loaded distribution over k={values.size} from {path}")
    return Distribution(probs=values / total)


def top_s(p: VectorLike, s: int) -> np.ndarray:
    """
    Keep the s largest entries of p and zero the rest.

    Ties are broken in favour of the lowest index.

    Raises:
        ValueError: If s is not in [1, k]
    """
    vector = _as_vector(p)
    if not 1 <= s <= vector.size:
        raise ValueError(f"s={s} must lie in [1, k={vector.size}]")
    # stable sort on -p keeps lower indices first among equal values
    order = np.argsort(-vector, kind="stable")[:s]
    kept = np.zeros_like(vector)
    kept[order] = vector[order]
    return kept


def approx_sparsity_slack(p: VectorLike, s: int) -> float:
    """l1 mass of p outside its s largest entries."""
    vector = _as_vector(p)
    return float(np.abs(vector - top_s(vector, s)).sum())


def smallest_sparsity(p: VectorLike, slack: float = 0.1) -> int:
    """Smallest s whose approximation slack is at most ``slack``."""
    vector = _as_vector(p)
    ordered = np.sort(vector)[::-1]
    # tail[j] is the mass dropped when keeping j + 1 entries
    tail = ordered.sum() - np.cumsum(ordered)
    feasible = np.flatnonzero(tail <= slack + 1e-12)
    return int(feasible[0]) + 1


def sparsity_profile(p: VectorLike, s: int) -> SparsityProfile:
    """Sparsity profile (s, lambda) with lambda the slack at s."""
    vector = _as_vector(p)
    return SparsityProfile(k=vector.size, s=s, lam=approx_sparsity_slack(vector, s))


def sample(p: Distribution, n: int, seed: SeedLike) -> np.ndarray:
    """
    Draw n i.i.d. indices from p by inverse-CDF sampling.

    Deterministic for a fixed integer seed.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = as_generator(seed)
    cdf = np.cumsum(p.probs)
    cdf[-1] = 1.0
    draws = np.searchsorted(cdf, rng.random(n), side="right")
    # side="right" never selects a zero-probability index; clip guards round-off at the top
    return np.minimum(draws, p.k - 1)


def empirical_frequencies(samples: np.ndarray, k: int) -> np.ndarray:
    """Normalized counts of samples over [k]."""
    samples = np.asarray(samples)
    return np.bincount(samples, minlength=k) / samples.size


def _paired(p: VectorLike, q: VectorLike) -> np.ndarray:
    a, b = _as_vector(p), _as_vector(q)
    if a.shape != b.shape:
        raise ValueError(f"Length mismatch: {a.size} vs {b.size}")
    return a - b


def error_l1(p: VectorLike, q: VectorLike) -> float:
    """l1 distance between two equal-length vectors."""
    return float(np.abs(_paired(p, q)).sum())


def error_l2(p: VectorLike, q: VectorLike) -> float:
    """l2 distance between two equal-length vectors."""
    return float(np.linalg.norm(_paired(p, q)))
