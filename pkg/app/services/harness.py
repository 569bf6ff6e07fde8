"""
Experiment harness: privatize-then-estimate sweeps over methods, decoders,
sample sizes and trials, with deterministic per-row seeding.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.models.schemas import (
    RESULT_COLUMNS,
    Decoder,
    Distribution,
    Estimate,
    ExperimentResult,
    ExperimentSpec,
    Histogram,
    Method,
    ResultRow,
)
from app.services import distributions, recovery
from app.services import mechanism as channel
from app.services.baselines import FrequencyOracle, make_baseline
from app.services.measurement import generate_biased, generate_rademacher, required_m
from app.utils.helpers import SeedLike, derive_seed
from app.utils.logger import get_logger

logger = get_logger(__name__)

AUTO_SPARSITY_SLACK = 0.1

_METHOD_ORDER = {method: index for index, method in enumerate(Method)}
_DECODER_ORDER = {decoder: index for index, decoder in enumerate(Decoder)}


class CompressiveOracle(FrequencyOracle):
    """Compressive privatization behind the common oracle interface."""

    method = Method.CP

    def __init__(self, mech: channel.Mechanism, s: int):
        super().__init__(mech.epsilon, mech.k)
        self.mechanism = mech
        self.s = s

    def privatize_many(self, xs: np.ndarray, seed: SeedLike) -> np.ndarray:
        return channel.privatize_many(self.mechanism, self._check_inputs(xs), seed)

    def aggregate(self, reports: np.ndarray) -> np.ndarray:
        return recovery.build_histogram(reports, self.mechanism.m).counts

    def estimate_raw(self, counts: np.ndarray, n: int) -> np.ndarray:
        return self.estimate_from_counts(counts, n).raw

    def estimate_from_counts(self, counts: np.ndarray, n: int, decoder: Decoder = Decoder.PROJECT) -> Estimate:
        return recovery.estimate_from_histogram(
            Histogram(counts=counts, n=n), self.mechanism, self.s, decoder
        )

    def channel(self) -> np.ndarray:
        return channel.channel_matrix(self.mechanism).T


# ==========================================
# Spec Resolution
# ==========================================

def build_mechanism(k: int, m: int, epsilon: float, seed: int, strict: bool = False) -> channel.Mechanism:
    """
    Rebuild the public channel from its parameters.

    The sign matrix is drawn from a seed derived from the public seed:
    Rademacher for epsilon < 1, biased (+1 w.p. e^-eps) otherwise.
    """
    matrix_seed = derive_seed(seed, "matrix")
    if epsilon < 1.0:
        matrix = generate_rademacher(m, k, matrix_seed)
    else:
        matrix = generate_biased(m, k, epsilon, matrix_seed)
    return channel.Mechanism(matrix, epsilon, strict=strict)


def resolve_distribution(spec: ExperimentSpec) -> Distribution:
    """
    Materialize the true distribution named by ``spec.dist``.

    Raises:
        ValueError: If a file distribution does not have k entries
    """
    source = spec.dist
    if source.kind == "geo":
        return distributions.make_geometric(spec.k, source.lam)
    if source.kind == "unif":
        return distributions.make_sparse_uniform(spec.k, source.s, derive_seed(spec.seed, "dist"))
    p = distributions.load_distribution(source.path)
    if p.k != spec.k:
        raise ValueError(f"Distribution file has {p.k} entries but k={spec.k}")
    return p


def resolve_sparsity(spec: ExperimentSpec, p: Distribution) -> int:
    """
    Sparsity handed to recovery: explicit value, the support size of Unif(s),
    or the smallest s with l1 slack at most 0.1.
    """
    if spec.sparsity != "auto":
        if spec.sparsity > spec.k:
            raise ValueError(f"sparsity={spec.sparsity} exceeds k={spec.k}")
        return int(spec.sparsity)
    if spec.dist.kind == "unif":
        return int(spec.dist.s)
    return distributions.smallest_sparsity(p, AUTO_SPARSITY_SLACK)


def build_oracles(spec: ExperimentSpec, s: int, metadata: Dict[str, object]) -> Dict[Method, FrequencyOracle]:
    """Instantiate every requested method, recording channel facts in metadata."""
    oracles: Dict[Method, FrequencyOracle] = {}
    for method in spec.methods:
        if method is Method.CP:
            if spec.k > s > spec.m:
                raise ValueError(f"sparsity={s} exceeds m={spec.m}; recovery needs s <= m")
            mech = build_mechanism(spec.k, spec.m, spec.epsilon, spec.seed, spec.strict_epsilon)
            advisory = required_m(s, spec.k, settings.oversample)
            if spec.m < advisory:
                logger.warning(
                    f"m={spec.m} is below the advisory size {advisory} for s={s}, k={spec.k}; "
                    f"recovery may be unreliable"
                )
            audit = channel.audit_privacy(mech)
            beta_budget = spec.epsilon / 2.0
            within_budget = mech.balance.beta_achieved <= beta_budget
            if not within_budget:
                logger.warning(
                    f"beta_achieved={mech.balance.beta_achieved:.4f} exceeds epsilon/2={beta_budget:.4f}; "
                    f"the privacy bound epsilon + 2*beta is more than twice epsilon"
                )
            metadata.update({
                "beta_budget": beta_budget,
                "beta_within_budget": within_budget,
                "required_m": advisory,
                "regime": mech.matrix.regime.value,
                "beta_achieved": mech.balance.beta_achieved,
                "epsilon_mechanism": mech.epsilon,
                "epsilon_effective": audit.epsilon_effective,
                "privacy_bound": audit.bound,
            })
            oracles[method] = CompressiveOracle(mech, s)
        else:
            oracles[method] = make_baseline(method, spec.epsilon, spec.k)
            if method is Method.HR:
                metadata["hadamard_order"] = oracles[method].m
    return oracles


# ==========================================
# Sweep
# ==========================================

Task = Tuple[Method, Decoder, int, int]

_WORKER_CONTEXT: Dict[str, object] = {}


def _init_worker(context: Dict[str, object]) -> None:
    _WORKER_CONTEXT.clear()
    _WORKER_CONTEXT.update(context)


def _run_task(task: Task) -> ResultRow:
    return _measure(task, **_WORKER_CONTEXT)


def _measure(
    task: Task,
    spec: ExperimentSpec,
    p: Distribution,
    s: int,
    oracles: Dict[Method, FrequencyOracle],
    record_timing: bool,
) -> ResultRow:
    method, decoder, n, trial = task
    seed = derive_seed(spec.seed, method.value, decoder.value, n, trial)
    rng = np.random.default_rng(seed)
    oracle = oracles[method]

    started = time.perf_counter()
    samples = distributions.sample(p, n, rng)
    counts = oracle.report_counts(samples, rng)
    estimate = oracle.estimate_from_counts(counts, n, decoder)
    elapsed_ms = (time.perf_counter() - started) * 1000.0

    return ResultRow(
        method=method,
        decoder=decoder,
        k=spec.k,
        m=oracle.m if method is Method.HR else spec.m,
        epsilon=spec.epsilon,
        s=s,
        dist=spec.dist.tag(),
        n=n,
        trial=trial,
        l1_error=distributions.error_l1(p, estimate.phat),
        l2_error=distributions.error_l2(p, estimate.phat),
        wall_ms=round(elapsed_ms, 3) if record_timing else 0.0,
        seed=seed,
    )


def run(
    spec: ExperimentSpec,
    workers: Optional[int] = None,
    record_timing: Optional[bool] = None,
) -> ExperimentResult:
    """
    Run every (method, decoder, n, trial) combination of an experiment.

    Each row draws its samples and privatization noise from its own sub-seed,
    so results do not depend on execution order, worker count, or how many
    other trials are run.
    """
    workers = settings.max_workers if workers is None else workers
    record_timing = settings.record_timing if record_timing is None else record_timing

    p = resolve_distribution(spec)
    s = resolve_sparsity(spec, p)
    metadata: Dict[str, object] = {
        "sparsity_slack": distributions.approx_sparsity_slack(p, s),
    }
    oracles = build_oracles(spec, s, metadata)

    tasks: List[Task] = [
        (method, decoder, n, trial)
        for method in spec.methods
        for decoder in spec.decoders
        for n in spec.n_grid
        for trial in range(spec.trials)
    ]
    logger.info(
        f"Running {len(tasks)} rows: methods={[m.value for m in spec.methods]}, "
        f"decoders={[d.value for d in spec.decoders]}, k={spec.k}, m={spec.m}, "
        f"epsilon={spec.epsilon}, s={s}, dist={spec.dist.tag()}, workers={workers}"
    )

    context = {"spec": spec, "p": p, "s": s, "oracles": oracles, "record_timing": record_timing}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(context,)) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = []
        for task in tasks:
            rows.append(_measure(task, **context))
            if task[3] == spec.trials - 1:
                logger.info(f"Finished {task[0].value}/{task[1].value} n={task[2]:,}")

    rows.sort(key=lambda r: (_METHOD_ORDER[r.method], _DECODER_ORDER[r.decoder], r.n, r.trial))
    return ExperimentResult(spec=spec, s=s, rows=rows, metadata=metadata)


# ==========================================
# Reporting
# ==========================================

def result_frame(result: ExperimentResult) -> pd.DataFrame:
    """Rows as a DataFrame with the canonical column order."""
    records = [row.model_dump(mode="json") for row in result.rows]
    return pd.DataFrame.from_records(records, columns=RESULT_COLUMNS)


def summarize(result: Union[ExperimentResult, pd.DataFrame]) -> pd.DataFrame:
    """
    Mean and (population) standard deviation of the errors per (method, decoder, n).

    Raises:
        ValueError: If there are no rows
    """
    frame = result_frame(result) if isinstance(result, ExperimentResult) else result
    if frame.empty:
        raise ValueError("Nothing to summarize")
    grouped = frame.groupby(["method", "decoder", "n"], sort=False)
    summary = grouped.agg(
        trials=("trial", "size"),
        l1_mean=("l1_error", "mean"),
        l1_std=("l1_error", lambda v: float(np.std(v))),
        l2_mean=("l2_error", "mean"),
        l2_std=("l2_error", lambda v: float(np.std(v))),
    ).reset_index()
    return summary.sort_values(["method", "decoder", "n"], kind="stable").reset_index(drop=True)


def sidecar_payload(result: ExperimentResult) -> Dict[str, object]:
    """Resolved configuration echoed next to the CSV."""
    return {
        "spec": result.spec.model_dump(mode="json"),
        "s": result.s,
        "rows": len(result.rows),
        "metadata": {key: to_jsonable(value) for key, value in result.metadata.items()},
    }


def to_jsonable(value: object) -> object:
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_result(result: ExperimentResult, out: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write the rows as CSV and the resolved spec as a JSON sidecar.

    Returns:
        Paths of the CSV and JSON files
    """
    csv_path = Path(out)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    result_frame(result).to_csv(csv_path, index=False, lineterminator="\n")
    json_path = csv_path.with_suffix(".json")
    json_path.write_text(json.dumps(sidecar_payload(result), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote {len(result.rows)} rows to {csv_path} (spec in {json_path})")
    return csv_path, json_path
