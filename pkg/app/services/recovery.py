"""
Server-side estimation for compressive privatization.

Pipeline: histogram of reports -> compressive sensing system -> orthogonal
matching pursuit -> rescale by D'^-1 -> decode into the simplex.

The sensing matrix is B = (A - mu) / (sigma * sqrt(m)), with mu and sigma
the population mean and standard deviation of an entry of A (0 and 1 for
Rademacher and Hadamard matrices). With

    c0 = ((e^eps - 1) * mu + e^eps + 1) / 2,
    D' = m * c0 * D,
    y  = 2 * c0 / ((e^eps - 1) * sigma) * (sqrt(m) * qhat - 1 / sqrt(m)),

the exact output distribution satisfies y = B D' p + e1 with
e1 = y-prefactor / sqrt(m) * J (D' - I) p. For the medium regime this
reduces to the prefactor (2e^eps - 1) / (e^eps - 1)^(3/2) and D' = m(2 - e^-eps) D.
"""

import math
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg

from app.core.config import settings
from app.models.schemas import Construction, Decoder, Distribution, Estimate, Histogram
from app.services.mechanism import Mechanism
from app.services.measurement import SignMatrix
from app.utils.logger import get_logger

logger = get_logger(__name__)

# singular values below this fraction of the largest count as zero
RANK_CUTOFF = 1e-10


def build_histogram(samples: Sequence[int], m: int) -> Histogram:
    """
    Count privatized reports over [m].

    Raises:
        ValueError: If samples is empty or holds values outside [0, m)
    """
    samples = np.asarray(samples, dtype=np.int64).reshape(-1)
    if samples.size == 0:
        raise ValueError("Cannot build a histogram from zero samples")
    if samples.min() < 0 or samples.max() >= m:
        raise ValueError(f"Reports must lie in [0, {m})")
    return Histogram(counts=np.bincount(samples, minlength=m), n=int(samples.size))


def merge_histograms(histograms: Sequence[Histogram]) -> Histogram:
    """Sum histograms built over disjoint shards of the reports."""
    if not histograms:
        raise ValueError("Nothing to merge")
    sizes = {h.m for h in histograms}
    if len(sizes) != 1:
        raise ValueError(f"Histograms disagree on m: {sorted(sizes)}")
    return Histogram(
        counts=np.sum([h.counts for h in histograms], axis=0),
        n=sum(h.n for h in histograms),
    )


class CsSystem:
    """The under-determined system y = B (D' p) + e1 + e2 for one histogram."""

    def __init__(self, y: np.ndarray, matrix: SignMatrix, scale: float, dprime: np.ndarray):
        self.y = y
        self.matrix = matrix
        self.scale = scale
        self.dprime = dprime
        self.mu = matrix.entry_mean
        self.sigma = matrix.entry_std
        self._norm = self.sigma * math.sqrt(matrix.m)

    @property
    def m(self) -> int:
        return self.matrix.m

    @property
    def k(self) -> int:
        return self.matrix.k

    @property
    def orthonormal(self) -> bool:
        """True when B has orthonormal columns (Hadamard construction)."""
        return self.matrix.construction is Construction.HADAMARD

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """B @ v."""
        v = np.asarray(v, dtype=float)
        return (self.matrix.matvec(v) - self.mu * v.sum()) / self._norm

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        """B.T @ r."""
        r = np.asarray(r, dtype=float)
        return (self.matrix.rmatvec(r) - self.mu * r.sum()) / self._norm

    def columns(self, index: Sequence[int]) -> np.ndarray:
        """Dense columns of B."""
        return (self.matrix.columns(np.asarray(index, dtype=np.int64)) - self.mu) / self._norm

    def noise_e1(self, p: np.ndarray) -> np.ndarray:
        """The J-term noise (prefactor / sqrt(m)) * J (D' - I) p."""
        p = np.asarray(p, dtype=float)
        return np.full(self.m, self.scale / math.sqrt(self.m) * float(((self.dprime - 1.0) * p).sum()))


def assemble_system(hist: Histogram, mech: Mechanism) -> CsSystem:
    """
    Build the compressive sensing system for a histogram of reports.

    Raises:
        ValueError: If the histogram and mechanism disagree on m
    """
    if hist.m != mech.m:
        raise ValueError(f"Histogram has m={hist.m}, mechanism expects m={mech.m}")
    return system_from_frequencies(hist.qhat, mech)


def system_from_frequencies(qhat: np.ndarray, mech: Mechanism) -> CsSystem:
    """
    Same as :func:`assemble_system` for an arbitrary frequency vector over [m],
    e.g. the exact output distribution.
    """
    matrix = mech.matrix
    qhat = np.asarray(qhat, dtype=float).reshape(-1)
    if qhat.size != matrix.m:
        raise ValueError(f"Frequencies have {qhat.size} entries, mechanism expects m={matrix.m}")
    gain = mech.exp_epsilon - 1.0
    c0 = (gain * matrix.entry_mean + mech.exp_epsilon + 1.0) / 2.0
    scale = 2.0 * c0 / (gain * matrix.entry_std)
    root_m = math.sqrt(matrix.m)
    y = scale * (root_m * qhat - 1.0 / root_m)
    dprime = matrix.m * c0 * mech.d
    return CsSystem(y=y, matrix=matrix, scale=scale, dprime=dprime)


class PursuitResult(NamedTuple):
    """Output of orthogonal matching pursuit."""

    coefficients: np.ndarray
    support: List[int]
    residual_norms: List[float]
    dropped: List[int]


def _least_squares(columns: np.ndarray, y: np.ndarray):
    solution, _, rank, _ = linalg.lstsq(columns, y, cond=RANK_CUTOFF)
    return solution, int(rank)


def orthogonal_matching_pursuit(
    system: CsSystem,
    s: int,
    max_iter: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> PursuitResult:
    """
    Greedy sparse recovery of D' p.

    Each round picks the column of B most correlated with the residual,
    refits by least squares on the support and updates the residual. A
    column that makes the support rank deficient is dropped and excluded.
    Stops after s selections, max_iter rounds, or once the residual norm
    falls below the tolerance.

    Raises:
        ValueError: If s is not in [1, min(m, k)]
    """
    if not 1 <= s <= min(system.m, system.k):
        raise ValueError(f"s={s} must lie in [1, min(m, k) = {min(system.m, system.k)}]")
    max_iter = 2 * s if max_iter is None else max_iter
    if max_iter < 1:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    tolerance = settings.omp_tolerance if tolerance is None else tolerance

    y = system.y
    residual = y.copy()
    support: List[int] = []
    coefficients = np.zeros(0)
    excluded = np.zeros(system.k, dtype=bool)
    norms = [float(np.linalg.norm(residual))]
    dropped: List[int] = []

    for _ in range(max_iter):
        if len(support) >= s or norms[-1] < tolerance:
            break
        correlation = np.abs(system.rmatvec(residual))
        correlation[excluded] = -np.inf
        candidate = int(np.argmax(correlation))
        if not np.isfinite(correlation[candidate]):
            break
        trial = support + [candidate]
        columns = system.columns(trial)
        solution, rank = _least_squares(columns, y)
        excluded[candidate] = True
        if rank < len(trial):
            dropped.append(candidate)
            logger.debug(f"OMP dropped column {candidate}: support became rank deficient")
            continue
        support, coefficients = trial, solution
        residual = y - columns @ coefficients
        norms.append(float(np.linalg.norm(residual)))

    f = np.zeros(system.k)
    f[support] = coefficients
    return PursuitResult(coefficients=f, support=support, residual_norms=norms, dropped=dropped)


def omp(system: CsSystem, s: int, max_iter: Optional[int] = None) -> np.ndarray:
    """Sparse recovery vector f with at most s nonzeros."""
    return orthogonal_matching_pursuit(system, s, max_iter).coefficients


def solve_full(system: CsSystem) -> np.ndarray:
    """
    Least-squares recovery over all k columns (no sparsity).

    Orthonormal sensing matrices reduce to f = B.T y.
    """
    if system.orthonormal:
        return system.rmatvec(system.y)
    dense = system.columns(np.arange(system.k))
    solution, _ = _least_squares(dense, system.y)
    return solution


# ==========================================
# Decoders
# ==========================================

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    ordered = np.sort(v)[::-1]
    excess = np.cumsum(ordered) - 1.0
    ranks = np.arange(1, v.size + 1)
    active = np.flatnonzero(ordered - excess / ranks > 0)[-1]
    theta = excess[active] / (active + 1)
    return np.maximum(v - theta, 0.0)


def normalize_decoder(v: np.ndarray) -> np.ndarray:
    """Clip negatives and rescale to sum 1; all-zero input maps to uniform."""
    clipped = np.maximum(np.asarray(v, dtype=float), 0.0)
    total = clipped.sum()
    if total <= 0:
        return np.full(clipped.size, 1.0 / clipped.size)
    return clipped / total


def apply_decoder(raw: np.ndarray, mode: Decoder) -> np.ndarray:
    """Map a raw estimate into the simplex with the chosen decoder."""
    if Decoder(mode) is Decoder.PROJECT:
        return project_simplex(raw)
    return normalize_decoder(raw)


def decode(
    f: np.ndarray,
    system: CsSystem,
    mode: Decoder,
    support: Optional[Sequence[int]] = None,
) -> Estimate:
    """
    Rescale a recovery by D'^-1 and decode it into a distribution.

    Raises:
        ValueError: If f does not have k entries
    """
    f = np.asarray(f, dtype=float)
    if f.size != system.k:
        raise ValueError(f"Recovery has {f.size} entries, expected k={system.k}")
    raw = f / system.dprime
    if support is None:
        support = np.flatnonzero(f).tolist()
    return Estimate(
        phat=Distribution(probs=apply_decoder(raw, mode)),
        support=[int(i) for i in support],
        raw=raw,
        decoder=Decoder(mode),
    )


# ==========================================
# Full Pipeline
# ==========================================

def estimate_from_histogram(
    hist: Histogram,
    mech: Mechanism,
    s: int,
    mode: Decoder = Decoder.PROJECT,
    max_iter: Optional[int] = None,
) -> Estimate:
    """Assemble, recover and decode. s >= k solves the full system instead of OMP."""
    system = assemble_system(hist, mech)
    if s >= system.k:
        return decode(solve_full(system), system, mode, support=range(system.k))
    result = orthogonal_matching_pursuit(system, s, max_iter)
    return decode(result.coefficients, system, mode, support=result.support)


def estimate(
    samples: Sequence[int],
    mech: Mechanism,
    s: int,
    mode: Decoder = Decoder.PROJECT,
    max_iter: Optional[int] = None,
) -> Estimate:
    """Estimate the input distribution from privatized reports."""
    return estimate_from_histogram(build_histogram(samples, mech.m), mech, s, mode, max_iter)
