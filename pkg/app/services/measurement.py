"""
Sign matrices for compressive privatization.

A sign matrix A is m x k over {-1, +1}. Column x defines the set C_x of rows
where it is +1 and its plus-count n_x = |C_x|. Users and the server rebuild
the same matrix from a public seed.

Entries are stored bit-packed row by row (bit set means +1, little-endian bit
order inside each byte). A dense float copy is materialized lazily for matrix
products; Hadamard matrices use the fast Walsh-Hadamard transform instead.
"""

import math
import struct
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.models.schemas import BalanceReport, Construction, Regime
from app.utils.helpers import SEED_MASK, SeedLike, as_generator
from app.utils.logger import get_logger

logger = get_logger(__name__)

BLOB_MAGIC = b"CPSM"
BLOB_HEADER = struct.Struct("<4sIIBBQd")

_REGIME_CODES = {Regime.HIGH: 0, Regime.MEDIUM: 1}
_CONSTRUCTION_CODES = {Construction.RADEMACHER: 0, Construction.BIASED: 1, Construction.HADAMARD: 2}

# rows generated per chunk when building large matrices
_CHUNK_ROWS = 1024


class SignMatrix:
    """
    An m x k sign matrix with cached column plus-counts.

    Instances are immutable once built; share them freely between threads.
    """

    def __init__(
        self,
        packed: np.ndarray,
        m: int,
        k: int,
        regime: Regime,
        seed: int,
        construction: Construction,
        epsilon_gen: Optional[float] = None,
        plus_counts: Optional[np.ndarray] = None,
    ):
        expected = (m, (k + 7) // 8)
        if packed.shape != expected:
            raise ValueError(f"Packed entries have shape {packed.shape}, expected {expected}")
        if regime is Regime.MEDIUM and epsilon_gen is None:
            raise ValueError("Medium privacy matrices need epsilon_gen")
        self._packed = np.ascontiguousarray(packed, dtype=np.uint8)
        self._packed.setflags(write=False)
        self.m = int(m)
        self.k = int(k)
        self.regime = Regime(regime)
        self.seed = int(seed) & SEED_MASK
        self.construction = Construction(construction)
        self.epsilon_gen = None if epsilon_gen is None else float(epsilon_gen)
        if plus_counts is None:
            plus_counts = _count_plus(self._packed, self.k)
        self.plus_counts = np.array(plus_counts, dtype=np.int64)
        if self.plus_counts.shape != (self.k,):
            raise ValueError(f"plus_counts has shape {self.plus_counts.shape}, expected ({self.k},)")
        self.plus_counts.setflags(write=False)

    def __repr__(self) -> str:
        return (
            f"SignMatrix(m={self.m}, k={self.k}, regime={self.regime.value}, "
            f"construction={self.construction.value}, seed={self.seed})"
        )

    # ==========================================
    # Entry Access
    # ==========================================

    @classmethod
    def from_plus_mask(
        cls,
        plus: np.ndarray,
        regime: Regime = Regime.HIGH,
        seed: int = 0,
        construction: Construction = Construction.RADEMACHER,
        epsilon_gen: Optional[float] = None,
    ) -> "SignMatrix":
        """Build from a boolean m x k array where True marks +1."""
        plus = np.asarray(plus, dtype=bool)
        if plus.ndim != 2:
            raise ValueError(f"Expected a 2-d mask, got shape {plus.shape}")
        m, k = plus.shape
        packed = np.packbits(plus, axis=1, bitorder="little")
        return cls(packed, m, k, regime, seed, construction, epsilon_gen)

    @classmethod
    def from_signs(cls, entries: np.ndarray, **kwargs) -> "SignMatrix":
        """Build from an explicit m x k array of -1/+1 values."""
        entries = np.asarray(entries)
        if not np.all(np.isin(entries, (-1, 1))):
            raise ValueError("Sign matrix entries must be -1 or +1")
        return cls.from_plus_mask(entries > 0, **kwargs)

    @property
    def packed(self) -> np.ndarray:
        return self._packed

    def plus_mask(self) -> np.ndarray:
        """Boolean m x k array, True where the entry is +1."""
        return np.unpackbits(self._packed, axis=1, count=self.k, bitorder="little").astype(bool)

    def entries(self) -> np.ndarray:
        """Dense int8 m x k array of -1/+1 values."""
        return np.where(self.plus_mask(), 1, -1).astype(np.int8)

    @cached_property
    def _dense(self) -> np.ndarray:
        return self.entries().astype(float)

    def column_plus(self, x: int) -> np.ndarray:
        """Boolean length-m indicator of C_x."""
        if not 0 <= x < self.k:
            raise IndexError(f"Column {x} out of range [0, {self.k})")
        byte, bit = divmod(x, 8)
        return ((self._packed[:, byte] >> bit) & 1).astype(bool)

    def column_rows(self, x: int) -> np.ndarray:
        """Sorted row indices of C_x (rows where column x is +1)."""
        return np.flatnonzero(self.column_plus(x))

    # ==========================================
    # Linear Operator
    # ==========================================

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """A @ v for a length-k vector."""
        v = np.asarray(v, dtype=float)
        if self.construction is Construction.HADAMARD:
            padded = np.zeros(self.m)
            padded[1:self.k + 1] = v
            return fwht(padded)
        return self._dense @ v

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        """A.T @ r for a length-m vector."""
        r = np.asarray(r, dtype=float)
        if self.construction is Construction.HADAMARD:
            return fwht(r)[1:self.k + 1]
        return self._dense.T @ r

    def columns(self, index: np.ndarray) -> np.ndarray:
        """Dense float m x len(index) submatrix."""
        index = np.asarray(index, dtype=np.int64)
        if self.construction is Construction.HADAMARD:
            return np.stack([np.where(self.column_plus(int(x)), 1.0, -1.0) for x in index], axis=1) \
                if index.size else np.zeros((self.m, 0))
        return self._dense[:, index]

    @property
    def entry_mean(self) -> float:
        """Population mean of an entry under the generating distribution."""
        if self.regime is Regime.MEDIUM:
            return 2.0 * math.exp(-self.epsilon_gen) - 1.0
        return 0.0

    @property
    def entry_std(self) -> float:
        """Population standard deviation of an entry."""
        if self.regime is Regime.MEDIUM:
            plus = math.exp(-self.epsilon_gen)
            return 2.0 * math.sqrt(plus * (1.0 - plus))
        return 1.0

    # ==========================================
    # Binary Blob
    # ==========================================

    def to_bytes(self) -> bytes:
        """Serialize: little-endian header followed by row-major packed bits."""
        header = BLOB_HEADER.pack(
            BLOB_MAGIC,
            self.m,
            self.k,
            _REGIME_CODES[self.regime],
            _CONSTRUCTION_CODES[self.construction],
            self.seed,
            float("nan") if self.epsilon_gen is None else self.epsilon_gen,
        )
        return header + self._packed.tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SignMatrix":
        """Inverse of :meth:`to_bytes`."""
        if len(blob) < BLOB_HEADER.size:
            raise ValueError("Blob too short for a sign matrix header")
        magic, m, k, regime_code, construction_code, seed, epsilon_gen = BLOB_HEADER.unpack_from(blob)
        if magic != BLOB_MAGIC:
            raise ValueError(f"Bad magic {magic!r}")
        row_bytes = (k + 7) // 8
        body = np.frombuffer(blob, dtype=np.uint8, offset=BLOB_HEADER.size)
        if body.size != m * row_bytes:
            raise ValueError(f"Blob body has {body.size} bytes, expected {m * row_bytes}")
        regime = {code: r for r, code in _REGIME_CODES.items()}[regime_code]
        construction = {code: c for c, code in _CONSTRUCTION_CODES.items()}[construction_code]
        return cls(
            body.reshape(m, row_bytes).copy(),
            m,
            k,
            regime,
            seed,
            construction,
            None if math.isnan(epsilon_gen) else epsilon_gen,
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        logger.info(f"Saved {self!r} to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SignMatrix":
        return cls.from_bytes(Path(path).read_bytes())


def _count_plus(packed: np.ndarray, k: int) -> np.ndarray:
    """Column plus-counts of a packed matrix, unpacking _CHUNK_ROWS rows at a time."""
    counts = np.zeros(k, dtype=np.int64)
    for start in range(0, packed.shape[0], _CHUNK_ROWS):
        chunk = np.unpackbits(packed[start:start + _CHUNK_ROWS], axis=1, count=k, bitorder="little")
        counts += chunk.sum(axis=0, dtype=np.int64)
    return counts


# ==========================================
# Generators
# ==========================================

def _generate_packed(m: int, k: int, plus_probability: float, seed: int) -> np.ndarray:
    rng = as_generator(seed)
    row_bytes = (k + 7) // 8
    packed = np.empty((m, row_bytes), dtype=np.uint8)
    for start in range(0, m, _CHUNK_ROWS):
        stop = min(m, start + _CHUNK_ROWS)
        plus = rng.random((stop - start, k)) < plus_probability
        packed[start:stop] = np.packbits(plus, axis=1, bitorder="little")
    return packed


def generate_rademacher(m: int, k: int, seed: SeedLike) -> SignMatrix:
    """I.i.d. uniform +/-1 entries for the high privacy regime."""
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be positive, got m={m}, k={k}")
    seed = _seed_value(seed)
    matrix = SignMatrix(
        _generate_packed(m, k, 0.5, seed), m, k, Regime.HIGH, seed, Construction.RADEMACHER
    )
    logger.debug(f"Generated {matrix!r}")
    return matrix


def generate_biased(m: int, k: int, epsilon: float, seed: SeedLike) -> SignMatrix:
    """
    I.i.d. entries equal to +1 with probability e^-epsilon, for the medium privacy regime.

    Raises:
        ValueError: If epsilon is outside [1, ln m]
    """
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be positive, got m={m}, k={k}")
    if not 1.0 <= epsilon <= math.log(m):
        raise ValueError(f"epsilon={epsilon} must lie in [1, ln m = {math.log(m):.4f}]")
    seed = _seed_value(seed)
    matrix = SignMatrix(
        _generate_packed(m, k, math.exp(-epsilon), seed),
        m, k, Regime.MEDIUM, seed, Construction.BIASED, epsilon_gen=epsilon,
    )
    logger.debug(f"Generated {matrix!r}")
    return matrix


def hadamard_order(k: int) -> int:
    """Smallest power of two strictly greater than k."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return 1 << k.bit_length()


def _parity(values: np.ndarray) -> np.ndarray:
    values = values.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        values ^= values >> shift
    return values & 1


def generate_hadamard(k: int) -> SignMatrix:
    """
    Columns 1..k of the Sylvester Hadamard matrix of order hadamard_order(k).

    The all-ones first column is skipped, so every kept column has exactly
    m/2 plus entries.
    """
    m = hadamard_order(k)
    cols = np.arange(1, k + 1, dtype=np.int64)
    packed = np.empty((m, (k + 7) // 8), dtype=np.uint8)
    for start in range(0, m, _CHUNK_ROWS):
        rows = np.arange(start, min(m, start + _CHUNK_ROWS), dtype=np.int64)
        plus = _parity(rows[:, None] & cols[None, :]) == 0
        packed[start:start + rows.size] = np.packbits(plus, axis=1, bitorder="little")
    return SignMatrix(
        packed, m, k, Regime.HIGH, 0, Construction.HADAMARD, plus_counts=np.full(k, m // 2),
    )


def fwht(values: np.ndarray) -> np.ndarray:
    """
    Unnormalized fast Walsh-Hadamard transform, equal to H @ values for the
    Sylvester matrix H of matching power-of-two order.
    """
    out = np.array(values, dtype=float)
    n = out.size
    if n & (n - 1):
        raise ValueError(f"Length {n} is not a power of two")
    h = 1
    while h < n:
        blocks = out.reshape(-1, 2, h)
        out = np.concatenate(
            (blocks[:, 0] + blocks[:, 1], blocks[:, 0] - blocks[:, 1]), axis=1
        ).reshape(n)
        h *= 2
    return out


def _seed_value(seed: SeedLike) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, SEED_MASK, dtype=np.uint64, endpoint=True))
    return int(seed) & SEED_MASK


# ==========================================
# Balance and Sizing
# ==========================================

def balance_center(matrix: SignMatrix) -> float:
    """Target plus-count per column: m/2 (high) or m/e^epsilon (medium)."""
    if matrix.regime is Regime.MEDIUM:
        return matrix.m * math.exp(-matrix.epsilon_gen)
    return matrix.m / 2.0


def check_balance(matrix: SignMatrix) -> BalanceReport:
    """Largest relative deviation of a plus-count from the regime center."""
    center = balance_center(matrix)
    deviation = np.abs(matrix.plus_counts - center) / center
    worst = int(np.argmax(deviation))
    return BalanceReport(
        beta_achieved=float(deviation[worst]),
        target_center=center,
        worst_column=worst,
    )


def balance_tolerance(m: int, k: int, delta: float, regime: Regime = Regime.HIGH,
                      epsilon: Optional[float] = None) -> float:
    """
    The beta that a random matrix meets for all columns with probability 1 - delta.

    Inverts 2k exp(-beta^2 m / 6) (Rademacher) or 2k exp(-beta^2 m / (3 e^eps)) (biased).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log_term = math.log(2 * k / delta)
    if regime is Regime.MEDIUM:
        if epsilon is None:
            raise ValueError("Medium regime tolerance needs epsilon")
        return math.sqrt(3.0 * math.exp(epsilon) * log_term / m)
    return math.sqrt(6.0 * log_term / m)


def required_m(s: int, k: int, oversample: float = 4.0) -> int:
    """
    Advisory output size ceil(oversample * s * ln(k/s)), at least 1.

    Raises:
        ValueError: If s is not in [1, k] or oversample is not positive
    """
    if not 1 <= s <= k:
        raise ValueError(f"s={s} must lie in [1, k={k}]")
    if oversample <= 0:
        raise ValueError(f"oversample must be positive, got {oversample}")
    return max(1, math.ceil(oversample * s * math.log(k / s)))
