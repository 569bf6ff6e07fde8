"""Endpoints describing the public privatization channel."""

from typing import Optional

from fastapi import APIRouter, HTTPException, Query, status
from fastapi.concurrency import run_in_threadpool
from pydantic import ValidationError

from app.models.schemas import MechanismInfoResponse, MechanismQuery
from app.services.collector import collector_service
from app.utils.logger import get_logger

router = APIRouter(prefix="/api/v1/mechanism", tags=["Mechanism"])
logger = get_logger(__name__)


@router.get("", response_model=MechanismInfoResponse, status_code=status.HTTP_200_OK)
async def describe_mechanism(
    k: int = Query(..., gt=0, description="Universe size"),
    m: int = Query(..., gt=0, description="Number of possible reports"),
    epsilon: float = Query(..., gt=0, description="Privacy parameter"),
    seed: int = Query(0, ge=0, description="Public seed of the sign matrix"),
    strict_epsilon: bool = Query(False, description="Shrink epsilon by twice the achieved balance"),
    sparsity: Optional[int] = Query(None, gt=0, description="Sparsity used for the advisory size of m"),
) -> MechanismInfoResponse:
    """
    Describe the channel users should run for a set of public parameters.

    Users rebuild the same sign matrix locally from (k, m, epsilon, seed) and
    send only a report index in [0, m).

    Raises:
        HTTPException 400: Parameters out of range
        HTTPException 500: Unexpected failure
    """
    try:
        query = MechanismQuery(
            k=k, m=m, epsilon=epsilon, seed=seed, strict_epsilon=strict_epsilon, sparsity=sparsity
        )
    except ValidationError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    request_id = id(query)
    logger.info(f"[Request {request_id}] Describe channel k={k}, m={m}, epsilon={epsilon}, seed={seed}")
    try:
        return await run_in_threadpool(collector_service.describe, query)
    except ValueError as e:
        logger.warning(f"[Request {request_id}] Rejected: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        logger.error(f"[Request {request_id}] Channel description failed: {e}", exc_info=True)
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error describing mechanism: {str(e)}"
        )
