"""
Collector service: the server side of the protocol exposed over HTTP.

Users and the collector agree on (k, m, epsilon, seed); both rebuild the same
public sign matrix from them, so only report indices travel over the wire.
"""

import json
from functools import lru_cache

from app.core.config import settings
from app.models.schemas import (
    EstimateRequest,
    EstimateResponse,
    ExperimentSpec,
    ExperimentSummaryResponse,
    MechanismInfoResponse,
    MechanismQuery,
    SummaryRow,
)
from app.services import harness, recovery
from app.services.mechanism import Mechanism, audit_privacy, bits_per_report
from app.services.measurement import required_m
from app.utils.logger import get_logger

logger = get_logger(__name__)


@lru_cache(maxsize=16)
def _cached_mechanism(k: int, m: int, epsilon: float, seed: int, strict: bool) -> Mechanism:
    logger.info(f"Building public channel k={k}, m={m}, epsilon={epsilon}, seed={seed}, strict={strict}")
    return harness.build_mechanism(k, m, epsilon, seed, strict)


class CollectorService:
    """Service for describing channels and estimating distributions from reports."""

    def _check_universe(self, k: int) -> None:
        if k > settings.max_api_universe:
            raise ValueError(f"k={k} exceeds the API limit of {settings.max_api_universe}")

    def mechanism_for(self, query: MechanismQuery) -> Mechanism:
        """
        Rebuild (or fetch from cache) the channel for a set of public parameters.

        Raises:
            ValueError: If the parameters are outside the served range
        """
        self._check_universe(query.k)
        return _cached_mechanism(query.k, query.m, query.epsilon, query.seed, query.strict_epsilon)

    def describe(self, query: MechanismQuery) -> MechanismInfoResponse:
        """Public facts about a channel: regime, report size, balance and privacy audit."""
        mech = self.mechanism_for(query)
        advisory = None
        if query.sparsity is not None:
            advisory = required_m(min(query.sparsity, query.k), query.k, settings.oversample)
        return MechanismInfoResponse(
            k=query.k,
            m=query.m,
            epsilon=query.epsilon,
            epsilon_mechanism=mech.epsilon,
            seed=query.seed,
            regime=mech.matrix.regime,
            construction=mech.matrix.construction,
            bits_per_report=bits_per_report(query.m),
            required_m=advisory,
            balance=mech.balance,
            audit=audit_privacy(mech),
        )

    def estimate(self, request: EstimateRequest) -> EstimateResponse:
        """
        Estimate the input distribution from submitted reports.

        Raises:
            ValueError: If there are too many reports or any report is outside [0, m)
        """
        if len(request.reports) > settings.max_api_reports:
            raise ValueError(
                f"{len(request.reports):,} reports exceed the API limit of {settings.max_api_reports:,}"
            )
        mech = self.mechanism_for(request)
        hist = recovery.build_histogram(request.reports, mech.m)
        result = recovery.estimate_from_histogram(hist, mech, request.sparsity, request.decoder)
        return EstimateResponse(
            n=hist.n,
            k=mech.k,
            phat=result.phat.probs.tolist(),
            support=result.support,
            decoder=result.decoder,
            epsilon_effective=audit_privacy(mech).epsilon_effective,
        )

    def run_experiment(self, spec: ExperimentSpec) -> ExperimentSummaryResponse:
        """
        Run a small sweep in-process and return its summary.

        Raises:
            ValueError: If the sweep is larger than the API serves
        """
        self._check_universe(spec.k)
        if max(spec.n_grid) > settings.max_api_reports:
            raise ValueError(f"n={max(spec.n_grid):,} exceeds the API limit of {settings.max_api_reports:,}")
        result = harness.run(spec, workers=1, record_timing=False)
        summary = harness.summarize(result)
        return ExperimentSummaryResponse(
            s=result.s,
            rows=[SummaryRow(**record) for record in json.loads(summary.to_json(orient="records"))],
            metadata={key: harness.to_jsonable(value) for key, value in result.metadata.items()},
        )


# Global service instance
collector_service = CollectorService()
