# routers/simulation.py
from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool
from utils.schema import CellResult, SimulateCellRequest
from utils.errors import ConfigurationError, NumericalError
from models.simulation import run_cell
import logging

logger = logging.getLogger(__name__)
router = APIRouter()


@router.post("/cell", response_model=CellResult)
async def simulate_cell(request: SimulateCellRequest):
    """
    Run one small Monte Carlo cell in-process
    """
    try:
        logger.info(f"Cell simulation requested: n={request.n}, rate={request.rate}, L={request.replicates}")
        return await run_in_threadpool(
            run_cell,
            n=request.n,
            rate=request.rate,
            methods=request.methods,
            m=request.m,
            replicates=request.replicates,
            seed=request.seed,
            level=request.level,
        )
    except ConfigurationError as e:
        logger.warning(f"Rejected simulation request: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except NumericalError as e:
        logger.error(f"Simulation failed: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))
