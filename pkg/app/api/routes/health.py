"""Health and readiness endpoints."""

import numpy as np
from fastapi import APIRouter, HTTPException, status

from app.core.config import settings
from app.models.schemas import Decoder, HealthResponse
from app.services import recovery
from app.services.harness import build_mechanism
from app.services.mechanism import privatize_many
from app.utils.logger import get_logger

router = APIRouter(tags=["Health"])
logger = get_logger(__name__)


@router.get("/health", response_model=HealthResponse)
async def health_check() -> HealthResponse:
    """
    Liveness check.

    Returns:
        HealthResponse with application status
    """
    return HealthResponse(
        status="healthy",
        app_name=settings.app_name,
        version=settings.app_version,
        environment=settings.environment
    )


@router.get("/health/ready", response_model=HealthResponse)
async def readiness_check() -> HealthResponse:
    """
    Readiness check: privatize and recover a point mass on a tiny channel.

    Raises:
        HTTPException 503: The numerical stack is not working
    """
    try:
        mech = build_mechanism(k=8, m=16, epsilon=settings.default_epsilon, seed=0)
        reports = privatize_many(mech, np.zeros(2000, dtype=np.int64), seed=0)
        result = recovery.estimate(reports, mech, s=1, mode=Decoder.PROJECT)
        if not np.isclose(result.phat.probs.sum(), 1.0):
            raise RuntimeError("estimate left the probability simplex")
    except Exception as e:
        logger.error(f"Readiness self-test failed: {e}", exc_info=True)
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(e))
    return HealthResponse(
        status="ready",
        app_name=settings.app_name,
        version=settings.app_version,
        environment=settings.environment
    )
