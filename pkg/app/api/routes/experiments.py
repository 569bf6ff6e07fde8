"""Endpoint running small experiment sweeps in-process."""

from fastapi import APIRouter, HTTPException, status
from fastapi.concurrency import run_in_threadpool

from app.models.schemas import ExperimentSpec, ExperimentSummaryResponse
from app.services.collector import collector_service
from app.utils.logger import get_logger

router = APIRouter(prefix="/api/v1/experiments", tags=["Experiments"])
logger = get_logger(__name__)


@router.post("", response_model=ExperimentSummaryResponse, status_code=status.HTTP_200_OK)
async def run_experiment(spec: ExperimentSpec) -> ExperimentSummaryResponse:
    """
    Run a privatize-then-estimate sweep and return per-(method, decoder, n)
    error means and standard deviations.

    Large sweeps belong on the command line (``python -m app.cli``).

    Raises:
        HTTPException 400: Invalid or oversized sweep
        HTTPException 500: Unexpected failure
    """
    request_id = id(spec)
    logger.info(
        f"[Request {request_id}] Experiment: k={spec.k}, m={spec.m}, epsilon={spec.epsilon}, "
        f"dist={spec.dist.tag()}, methods={[m.value for m in spec.methods]}, trials={spec.trials}"
    )
    try:
        return await run_in_threadpool(collector_service.run_experiment, spec)
    except (ValueError, IndexError) as e:
        logger.warning(f"[Request {request_id}] Rejected: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        logger.error(f"[Request {request_id}] Experiment failed: {e}", exc_info=True)
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error running experiment: {str(e)}"
        )
