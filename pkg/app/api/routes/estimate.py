"""Estimation endpoint: privatized reports in, distribution estimate out."""

from fastapi import APIRouter, HTTPException, status
from fastapi.concurrency import run_in_threadpool

from app.models.schemas import EstimateRequest, EstimateResponse
from app.services.collector import collector_service
from app.utils.logger import get_logger

router = APIRouter(prefix="/api/v1/estimate", tags=["Estimation"])
logger = get_logger(__name__)


@router.post("", response_model=EstimateResponse, status_code=status.HTTP_200_OK)
async def estimate_distribution(request: EstimateRequest) -> EstimateResponse:
    """
    Estimate the users' distribution from their privatized reports.

    The collector rebuilds the public channel from (k, m, epsilon, seed),
    histograms the reports, runs sparse recovery with the given sparsity and
    decodes the result into the probability simplex.

    Raises:
        HTTPException 400: Reports outside [0, m), too many reports, or bad parameters
        HTTPException 500: Unexpected failure
    """
    request_id = id(request)
    logger.info(
        f"[Request {request_id}] Estimate: n={len(request.reports):,}, k={request.k}, m={request.m}, "
        f"epsilon={request.epsilon}, s={request.sparsity}, decoder={request.decoder.value}"
    )
    try:
        response = await run_in_threadpool(collector_service.estimate, request)
    except (ValueError, IndexError) as e:
        logger.warning(f"[Request {request_id}] Rejected: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        logger.error(f"[Request {request_id}] Estimation failed: {e}", exc_info=True)
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error estimating distribution: {str(e)}"
        )
    logger.info(f"[Request {request_id}] Estimate complete, support={response.support}")
    return response
