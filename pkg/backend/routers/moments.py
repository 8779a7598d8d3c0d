# routers/moments.py
from fastapi import APIRouter, HTTPException
from utils.schema import MomentsRequest, MomentsResponse
from utils.errors import ConfigurationError, NumericalError
from models.reports import moments_report
import logging

logger = logging.getLogger(__name__)
router = APIRouter()


@router.post("/report", response_model=MomentsResponse)
async def report(request: MomentsRequest):
    """
    Exact finite-sample moments for a design and imputation prior
    """
    try:
        logger.info(f"Moments requested: n={len(request.design.x)}, r={len(request.design.respondents)}, m={request.m}")
        return moments_report(request)
    except ConfigurationError as e:
        logger.warning(f"Rejected moments request: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except NumericalError as e:
        logger.error(f"Moments computation failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))
