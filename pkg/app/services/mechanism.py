"""
The per-user privatization channel of compressive privatization.

A user holding x in [k] reports y in [m] with probability

    Q(y | x) = e^eps * d_x   if y in C_x
               d_x           otherwise,

where d_x = 1 / (n_x e^eps + m - n_x) and C_x is the set of rows where
column x of the public sign matrix is +1.
"""

import math
from typing import Optional

import numpy as np

from app.models.schemas import BalanceReport, Distribution, PrivacyAudit, Regime
from app.services.measurement import SignMatrix, check_balance
from app.utils.helpers import SeedLike, as_generator
from app.utils.logger import get_logger

logger = get_logger(__name__)


class Mechanism:
    """
    Privatization channel Q built from a sign matrix and a privacy parameter.

    In strict mode the channel runs with eps' = eps - 2 * beta_achieved so
    that the proven guarantee eps' + 2 * beta equals the requested eps.

    Accepted epsilon lies in (0, ln m]. A single-output channel (m = 1)
    reveals nothing and takes any positive epsilon. ``enforce_range=False``
    lifts the upper limit for hand-built high privacy matrices such as
    worked examples; medium regime matrices always enforce it.

    Raises:
        ValueError: If epsilon is not positive, exceeds ln m, or strict
            mode leaves no budget
    """

    def __init__(
        self,
        matrix: SignMatrix,
        epsilon: float,
        strict: bool = False,
        enforce_range: bool = True,
    ):
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        over_range = matrix.m > 1 and epsilon > math.log(matrix.m)
        if over_range and (enforce_range or matrix.regime is Regime.MEDIUM):
            raise ValueError(f"epsilon={epsilon} exceeds ln m = {math.log(matrix.m):.4f}")
        if matrix.regime is Regime.HIGH and epsilon >= 1:
            logger.debug(f"epsilon={epsilon} >= 1 on a high privacy matrix; medium regime is usually better")
        if matrix.regime is Regime.MEDIUM and epsilon < 1:
            logger.warning(f"epsilon={epsilon} < 1 on a medium privacy matrix")

        self.matrix = matrix
        self.epsilon_requested = float(epsilon)
        self.strict = strict
        self.balance: BalanceReport = check_balance(matrix)

        running = float(epsilon)
        if strict:
            running = epsilon - 2.0 * self.balance.beta_achieved
            if running <= 0:
                raise ValueError(
                    f"Strict mode leaves no budget: epsilon={epsilon}, "
                    f"beta_achieved={self.balance.beta_achieved:.4f}"
                )
            logger.info(
                f"Strict epsilon: running channel at {running:.6f} "
                f"(requested {epsilon}, beta={self.balance.beta_achieved:.4f})"
            )
        self.epsilon = running
        self.exp_epsilon = math.exp(running)

        counts = matrix.plus_counts.astype(float)
        weights = counts * self.exp_epsilon + matrix.m - counts
        self.d = 1.0 / weights
        self.d.setflags(write=False)
        # probability that the report lands inside C_x
        self.inside_probability = counts * self.exp_epsilon * self.d
        self.inside_probability.setflags(write=False)

    def __repr__(self) -> str:
        return f"Mechanism(epsilon={self.epsilon:.6g}, strict={self.strict}, matrix={self.matrix!r})"

    @property
    def m(self) -> int:
        return self.matrix.m

    @property
    def k(self) -> int:
        return self.matrix.k


def _check_input(mech: Mechanism, x: int) -> None:
    if not 0 <= x < mech.k:
        raise IndexError(f"Input {x} out of range [0, {mech.k})")


def channel_prob(mech: Mechanism, y: int, x: int) -> float:
    """Q(y | x)."""
    _check_input(mech, x)
    if not 0 <= y < mech.m:
        raise IndexError(f"Output {y} out of range [0, {mech.m})")
    if mech.matrix.column_plus(x)[y]:
        return mech.exp_epsilon * float(mech.d[x])
    return float(mech.d[x])


def channel_matrix(mech: Mechanism) -> np.ndarray:
    """Full m x k matrix of Q(y | x); meant for small instances."""
    plus = mech.matrix.plus_mask()
    return np.where(plus, mech.exp_epsilon, 1.0) * mech.d[None, :]


def output_distribution(mech: Mechanism, p: Distribution) -> np.ndarray:
    """Exact distribution of one report when the input is drawn from p."""
    if p.k != mech.k:
        raise ValueError(f"Distribution has k={p.k}, mechanism expects k={mech.k}")
    scaled = mech.d * p.probs
    # Q p = d-weighted column sums, with the e^eps boost on the plus rows
    return mech.matrix.matvec(scaled) * (mech.exp_epsilon - 1.0) / 2.0 \
        + scaled.sum() * (mech.exp_epsilon + 1.0) / 2.0


def privatize_many(mech: Mechanism, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
    """
    Privatize a batch of inputs.

    Each report first decides whether it falls inside C_x, then picks a
    row uniformly within the chosen set. Deterministic for an integer seed.
    """
    xs = np.asarray(xs, dtype=np.int64).reshape(-1)
    if xs.size and (xs.min() < 0 or xs.max() >= mech.k):
        raise IndexError(f"Inputs must lie in [0, {mech.k})")
    rng = as_generator(seed)
    inside = rng.random(xs.size) < mech.inside_probability[xs]
    out = np.empty(xs.size, dtype=np.int64)

    order = np.argsort(xs, kind="stable")
    values, starts, counts = np.unique(xs[order], return_index=True, return_counts=True)
    for x, start, count in zip(values, starts, counts):
        positions = order[start:start + count]
        plus = mech.matrix.column_plus(int(x))
        hit = inside[positions]
        for chosen, rows in ((hit, np.flatnonzero(plus)), (~hit, np.flatnonzero(~plus))):
            targets = positions[chosen]
            if targets.size:
                out[targets] = rows[rng.integers(0, rows.size, size=targets.size)]
    return out


def privatize(mech: Mechanism, x: int, seed: SeedLike) -> int:
    """Privatize a single input."""
    _check_input(mech, x)
    return int(privatize_many(mech, np.array([x]), seed)[0])


def bits_per_report(m: int) -> int:
    """Bits needed to send one report from [m]."""
    return math.ceil(math.log2(m)) if m > 1 else 0


def audit_privacy(mech: Mechanism, beta: Optional[float] = None) -> PrivacyAudit:
    """
    Upper bound on the worst-case likelihood ratio max Q(y|x1) / Q(y|x2).

    Computed in closed form from the plus-counts as
    e^eps * max_x (n_x e^eps + m - n_x) / min_x (n_x e^eps + m - n_x).
    """
    weights = 1.0 / mech.d
    max_ratio = mech.exp_epsilon * float(weights.max() / weights.min())
    beta = mech.balance.beta_achieved if beta is None else beta
    audit = PrivacyAudit(
        max_ratio=max_ratio,
        epsilon_effective=math.log(max_ratio),
        bound=mech.epsilon + 2.0 * beta,
    )
    if not audit.within_bound:
        logger.warning(
            f"Privacy audit exceeds bound: epsilon_effective={audit.epsilon_effective:.6f} "
            f"> {audit.bound:.6f} (beta={beta:.4f})"
        )
    return audit
