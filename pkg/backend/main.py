from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from routers import moments, imputation, simulation
from utils.logging_config import configure_logging
from utils.schema import HealthResponse
import logging

from dotenv import load_dotenv
load_dotenv(override=True)

configure_logging()
logger = logging.getLogger(__name__)

VERSION = "1.0.0"

app = FastAPI(
    title="Regression Multiple Imputation API",
    description="Multiple imputation for normal linear regression with exact finite-sample moments",
    version=VERSION
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(moments.router, prefix="/moments", tags=["moments"])
app.include_router(imputation.router, prefix="/impute", tags=["impute"])
app.include_router(simulation.router, prefix="/simulate", tags=["simulate"])

@app.get("/")
async def root():
    return {
        "message": "Regression Multiple Imputation API",
        "status": "running",
        "endpoints": {
            "moments": ["/moments/report"],
            "impute": ["/impute"],
            "simulate": ["/simulate/cell"]
        }
    }

@app.get("/health", response_model=HealthResponse)
async def health():
    return HealthResponse(status="healthy", version=VERSION)

if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        app,
        host="0.0.0.0",
        port=8888,
        timeout_keep_alive=45
    )
