"""
Baseline locally private frequency oracles.

Every oracle follows the same life cycle: users privatize their value,
the server aggregates the reports into per-coordinate counts, inverts the
channel coordinatewise and decodes the result into the simplex.

    RR      k-ary randomized response
    HR      Hadamard response, run through the compressive pipeline with a
            Hadamard sign matrix and no sparsity assumption
    SS      subset selection
    RAPPOR  basic one-hot RAPPOR with per-bit randomized response
"""

import itertools
import math
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from app.models.schemas import BaselineKind, Decoder, Distribution, Estimate, Histogram, Method
from app.services import mechanism as channel
from app.services import recovery
from app.services.measurement import generate_hadamard
from app.utils.helpers import SeedLike, as_generator
from app.utils.logger import get_logger

logger = get_logger(__name__)

# exhaustive channel enumeration is limited to small universes
MAX_ENUMERATION_K = 16

# key entries materialized at once when drawing subsets
SUBSET_CHUNK_ENTRIES = 1 << 22


class FrequencyOracle(ABC):
    """Common interface of the privatize / aggregate / estimate protocol."""

    method: Method

    def __init__(self, epsilon: float, k: int):
        self.config = BaselineKind(kind=self.method, epsilon=epsilon, k=k)
        self.epsilon = float(epsilon)
        self.k = int(k)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(epsilon={self.epsilon:g}, k={self.k})"

    def _check_inputs(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64).reshape(-1)
        if xs.size and (xs.min() < 0 or xs.max() >= self.k):
            raise IndexError(f"Inputs must lie in [0, {self.k})")
        return xs

    @abstractmethod
    def privatize_many(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        """Privatize a batch of inputs; one report per row."""

    def privatize(self, x: int, seed: SeedLike):
        """Privatize one input."""
        return self.privatize_many(np.array([x]), seed)[0]

    @abstractmethod
    def aggregate(self, reports: np.ndarray) -> np.ndarray:
        """Sufficient statistic (count vector) of a batch of reports."""

    def report_counts(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        """Privatize a batch and aggregate it."""
        return self.aggregate(self.privatize_many(xs, seed))

    @abstractmethod
    def estimate_raw(self, counts: np.ndarray, n: int) -> np.ndarray:
        """Unbiased, undecoded estimate of p from aggregated counts."""

    def estimate_from_counts(self, counts: np.ndarray, n: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
        if n < 1:
            raise ValueError("Cannot estimate from zero reports")
        raw = self.estimate_raw(np.asarray(counts), n)
        phat = recovery.apply_decoder(raw, decoder)
        return Estimate(
            phat=Distribution(probs=phat),
            support=np.flatnonzero(phat).tolist(),
            raw=raw,
            decoder=Decoder(decoder),
        )

    def estimate(self, reports: np.ndarray, decoder: Decoder = Decoder.PROJECT) -> Estimate:
        """Estimate p from a batch of reports."""
        reports = np.asarray(reports)
        if reports.shape[0] == 0:
            raise ValueError("Cannot estimate from zero reports")
        return self.estimate_from_counts(self.aggregate(reports), reports.shape[0], decoder)

    @abstractmethod
    def channel(self) -> np.ndarray:
        """Row-stochastic k x (number of outputs) matrix of report probabilities."""

    def empirical_epsilon(self) -> float:
        """Largest log-likelihood ratio between two inputs over all outputs."""
        if self.k > MAX_ENUMERATION_K:
            raise ValueError(f"Channel enumeration limited to k <= {MAX_ENUMERATION_K}")
        matrix = self.channel()
        observed = matrix.max(axis=0) > 0
        with np.errstate(divide="ignore"):
            ratios = matrix[:, observed].max(axis=0) / matrix[:, observed].min(axis=0)
        return float(np.log(ratios.max()))


class RandomizedResponse(FrequencyOracle):
    """Report the true value with probability e^eps / (e^eps + k - 1), else another uniformly."""

    method = Method.RR

    def __init__(self, epsilon: float, k: int):
        super().__init__(epsilon, k)
        denominator = math.exp(epsilon) + k - 1
        self.p_true = math.exp(epsilon) / denominator
        self.p_other = 1.0 / denominator

    def privatize_many(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        xs = self._check_inputs(xs)
        if self.k == 1:
            return np.zeros_like(xs)
        rng = as_generator(seed)
        keep = rng.random(xs.size) < self.p_true
        others = rng.integers(0, self.k - 1, size=xs.size)
        others += others >= xs
        return np.where(keep, xs, others)

    def aggregate(self, reports: np.ndarray) -> np.ndarray:
        return np.bincount(np.asarray(reports, dtype=np.int64).reshape(-1), minlength=self.k)

    def estimate_raw(self, counts: np.ndarray, n: int) -> np.ndarray:
        return (counts / n - self.p_other) / (self.p_true - self.p_other)

    def channel(self) -> np.ndarray:
        matrix = np.full((self.k, self.k), self.p_other)
        np.fill_diagonal(matrix, self.p_true)
        return matrix


class HadamardResponse(FrequencyOracle):
    """
    Hadamard response as a special case of compressive privatization.

    The sign matrix holds columns 1..k of a Sylvester Hadamard matrix, so
    every column is exactly balanced and B has orthonormal columns; the
    recovery solves the full system (s = k).
    """

    method = Method.HR

    def __init__(self, epsilon: float, k: int):
        super().__init__(epsilon, k)
        self.mechanism = channel.Mechanism(generate_hadamard(k), epsilon, enforce_range=False)

    @property
    def m(self) -> int:
        return self.mechanism.m

    def privatize_many(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        return channel.privatize_many(self.mechanism, self._check_inputs(xs), seed)

    def aggregate(self, reports: np.ndarray) -> np.ndarray:
        return recovery.build_histogram(reports, self.m).counts

    def estimate_raw(self, counts: np.ndarray, n: int) -> np.ndarray:
        system = recovery.assemble_system(Histogram(counts=counts, n=n), self.mechanism)
        return recovery.solve_full(system) / system.dprime

    def estimate_from_counts(self, counts: np.ndarray, n: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
        return recovery.estimate_from_histogram(
            Histogram(counts=counts, n=n), self.mechanism, s=self.k, mode=decoder
        )

    def channel(self) -> np.ndarray:
        return channel.channel_matrix(self.mechanism).T


class SubsetSelection(FrequencyOracle):
    """
    Report a subset of size d = max(1, round(k / (e^eps + 1))).

    The true value is included with probability e^eps d / (e^eps d + k - d);
    the rest of the subset is uniform over the other values.
    """

    method = Method.SS

    def __init__(self, epsilon: float, k: int):
        super().__init__(epsilon, k)
        boost = math.exp(epsilon)
        self.d = min(k, max(1, math.floor(k / (boost + 1.0) + 0.5)))
        self.p_include = boost * self.d / (boost * self.d + k - self.d)
        if k > 1:
            self.q_include = (
                self.p_include * (self.d - 1) + (1.0 - self.p_include) * self.d
            ) / (k - 1)
        else:
            self.q_include = 0.0

    def _subset_chunks(self, xs: np.ndarray, rng: np.random.Generator) -> Iterator[np.ndarray]:
        """
        Yield privatized subsets for consecutive chunks of xs, one row per user.

        Each row ranks uniform keys over the k - 1 values other than x and keeps
        the d smallest; when x is included it replaces the largest of those.
        """
        rows = max(1, SUBSET_CHUNK_ENTRIES // self.k)
        for start in range(0, xs.size, rows):
            chunk = xs[start:start + rows]
            if self.k == 1:
                yield np.zeros((chunk.size, 1), dtype=np.int64)
                continue
            include = rng.random(chunk.size) < self.p_include
            keys = rng.random((chunk.size, self.k))
            positions = np.arange(chunk.size)
            keys[positions, chunk] = np.inf
            subsets = np.argpartition(keys, self.d - 1, axis=1)[:, :self.d]
            largest = np.argmax(np.take_along_axis(keys, subsets, axis=1), axis=1)
            subsets[positions[include], largest[include]] = chunk[include]
            yield subsets

    def privatize_many(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        xs = self._check_inputs(xs)
        rng = as_generator(seed)
        chunks = list(self._subset_chunks(xs, rng))
        if not chunks:
            return np.empty((0, self.d), dtype=np.int64)
        return np.sort(np.concatenate(chunks), axis=1)

    def aggregate(self, reports: np.ndarray) -> np.ndarray:
        return np.bincount(np.asarray(reports, dtype=np.int64).reshape(-1), minlength=self.k)

    def report_counts(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        """
        Privatize chunk by chunk and aggregate without keeping all n subsets.

        Consumes the generator exactly as ``privatize_many`` does, so both give
        the same counts for the same seed.
        """
        xs = self._check_inputs(xs)
        rng = as_generator(seed)
        counts = np.zeros(self.k, dtype=np.int64)
        for subsets in self._subset_chunks(xs, rng):
            counts += self.aggregate(subsets)
        return counts

    def estimate_raw(self, counts: np.ndarray, n: int) -> np.ndarray:
        if self.k == 1:
            return np.ones(1)
        return (counts / n - self.q_include) / (self.p_include - self.q_include)

    def channel(self) -> np.ndarray:
        subsets = list(itertools.combinations(range(self.k), self.d))
        with_x = self.p_include / math.comb(self.k - 1, self.d - 1)
        without_x = (1.0 - self.p_include) / math.comb(self.k - 1, self.d) if self.d < self.k else 0.0
        matrix = np.empty((self.k, len(subsets)))
        for col, subset in enumerate(subsets):
            members = np.zeros(self.k, dtype=bool)
            members[list(subset)] = True
            matrix[:, col] = np.where(members, with_x, without_x)
        return matrix


class Rappor(FrequencyOracle):
    """One-hot encoding with each bit flipped independently with probability 1 / (e^(eps/2) + 1)."""

    method = Method.RAPPOR

    def __init__(self, epsilon: float, k: int):
        super().__init__(epsilon, k)
        self.flip = 1.0 / (math.exp(epsilon / 2.0) + 1.0)

    def privatize_many(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        xs = self._check_inputs(xs)
        rng = as_generator(seed)
        bits = np.zeros((xs.size, self.k), dtype=np.uint8)
        bits[np.arange(xs.size), xs] = 1
        flips = rng.random((xs.size, self.k)) < self.flip
        return bits ^ flips.astype(np.uint8)

    def aggregate(self, reports: np.ndarray) -> np.ndarray:
        reports = np.asarray(reports)
        return reports.reshape(-1, self.k).sum(axis=0, dtype=np.int64)

    def report_counts(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        """Per-bit one counts drawn from their exact marginals."""
        xs = self._check_inputs(xs)
        rng = as_generator(seed)
        holders = np.bincount(xs, minlength=self.k)
        return rng.binomial(holders, 1.0 - self.flip) + rng.binomial(xs.size - holders, self.flip)

    def estimate_raw(self, counts: np.ndarray, n: int) -> np.ndarray:
        return (counts / n - self.flip) / (1.0 - 2.0 * self.flip)

    def channel(self) -> np.ndarray:
        outputs = np.arange(1 << self.k, dtype=np.int64)
        ones = np.array([bin(int(b)).count("1") for b in outputs])
        own_bit = (outputs[None, :] >> np.arange(self.k)[:, None]) & 1
        mismatches = ones[None, :] + 1 - 2 * own_bit
        return self.flip ** mismatches * (1.0 - self.flip) ** (self.k - mismatches)


# ==========================================
# Factory and Functional Interface
# ==========================================

_ORACLES = {
    Method.RR: RandomizedResponse,
    Method.HR: HadamardResponse,
    Method.SS: SubsetSelection,
    Method.RAPPOR: Rappor,
}


@lru_cache(maxsize=32)
def make_baseline(kind: Method, epsilon: float, k: int) -> FrequencyOracle:
    """
    Build (and cache) a baseline oracle.

    Raises:
        ValueError: If kind is not a baseline method
    """
    kind = Method(kind)
    if kind not in _ORACLES:
        raise ValueError(f"'{kind.value}' is not a baseline method")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return _ORACLES[kind](epsilon, k)


def rr_privatize(x: int, epsilon: float, k: int, seed: SeedLike) -> int:
    return int(make_baseline(Method.RR, epsilon, k).privatize(x, seed))


def rr_estimate(samples: Sequence[int], epsilon: float, k: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
    return make_baseline(Method.RR, epsilon, k).estimate(np.asarray(samples), decoder)


def hr_privatize(x: int, epsilon: float, k: int, seed: SeedLike) -> int:
    return int(make_baseline(Method.HR, epsilon, k).privatize(x, seed))


def hr_estimate(samples: Sequence[int], epsilon: float, k: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
    return make_baseline(Method.HR, epsilon, k).estimate(np.asarray(samples), decoder)


def ss_privatize(x: int, epsilon: float, k: int, seed: SeedLike) -> np.ndarray:
    return make_baseline(Method.SS, epsilon, k).privatize(x, seed)


def ss_estimate(reports: np.ndarray, epsilon: float, k: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
    return make_baseline(Method.SS, epsilon, k).estimate(reports, decoder)


def rappor_privatize(x: int, epsilon: float, k: int, seed: SeedLike) -> np.ndarray:
    return make_baseline(Method.RAPPOR, epsilon, k).privatize(x, seed)


def rappor_estimate(reports: np.ndarray, epsilon: float, k: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
    return make_baseline(Method.RAPPOR, epsilon, k).estimate(reports, decoder)
