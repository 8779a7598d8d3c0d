# routers/imputation.py
from fastapi import APIRouter, HTTPException
from utils.schema import ImputeRequest, ImputeResponse
from utils.errors import ConfigurationError, NumericalError
from models.reports import impute_report
import logging

logger = logging.getLogger(__name__)
router = APIRouter()


@router.post("", response_model=ImputeResponse)
async def impute(request: ImputeRequest):
    """
    Multiply impute missing outcomes (null y values) and combine the
    regression coefficients with Rubin's rules
    """
    try:
        missing = sum(1 for value in request.y if value is None)
        logger.info(f"Imputation requested: n={len(request.y)}, missing={missing}, method={request.method.value}, m={request.m}")
        return impute_report(request)
    except ConfigurationError as e:
        logger.warning(f"Rejected imputation request: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except NumericalError as e:
        logger.error(f"Imputation failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))
