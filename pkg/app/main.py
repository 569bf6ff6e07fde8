"""
FastAPI application entry point for the Compressive Privatization API.

Exposes the collector side of locally private distribution estimation:
channel descriptions for users, estimation from privatized reports, and
small experiment sweeps.
"""

from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app.core.config import settings
from app.api.routes import health, mechanism, estimate, experiments
from app.utils.logger import setup_logging, get_logger

# Initialize logging
setup_logging(level="DEBUG" if settings.debug else settings.log_level)
logger = get_logger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Application lifespan context manager.

    Validates configuration at startup and refuses to start on errors.
    """
    # ========================================
    # STARTUP
    # ========================================
    logger.info("=" * 80)
    logger.info(f"Starting {settings.app_name} v{settings.app_version}")
    logger.info(f"Environment: {settings.environment}")
    logger.info(f"Debug mode: {settings.debug}")
    logger.info("=" * 80)

    logger.info("Validating configuration...")
    config_status = settings.validate_startup_config()

    if config_status["warnings"]:
        logger.info("-" * 80)
        logger.info("Configuration Warnings:")
        for warning in config_status["warnings"]:
            logger.warning(f"  - {warning}")

    if config_status["errors"]:
        logger.error("=" * 80)
        logger.error("CRITICAL CONFIGURATION ERRORS:")
        for error in config_status["errors"]:
            logger.error(f"  - {error}")
        logger.error("=" * 80)
        raise RuntimeError("Critical configuration errors - cannot start application")

    logger.info("-" * 80)
    logger.info("Limits:")
    logger.info(f"  Max universe size k: {settings.max_api_universe:,}")
    logger.info(f"  Max reports per request: {settings.max_api_reports:,}")
    logger.info(f"  Logs: {settings.log_dir}/")
    logger.info("-" * 80)
    logger.info("Application startup complete")
    logger.info(f"API documentation: http://localhost:{settings.api_port}/docs")
    logger.info("=" * 80)

    yield

    # ========================================
    # SHUTDOWN
    # ========================================
    logger.info("Shutting down application")


# Create FastAPI application
app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Locally differentially private distribution estimation with compressive privatization",
    lifespan=lifespan,
    docs_url="/docs",
    redoc_url="/redoc"
)

# CORS middleware configuration
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(health.router)
app.include_router(mechanism.router)
app.include_router(estimate.router)
app.include_router(experiments.router)


@app.get("/api/info")
async def api_info():
    """
    Get information about the API.

    Returns:
        API information and available endpoints
    """
    return {
        "message": settings.app_name,
        "version": settings.app_version,
        "endpoints": {
            "GET /health": "Liveness check",
            "GET /health/ready": "Privatize-and-recover self-test",
            "GET /api/v1/mechanism": "Describe the public channel for (k, m, epsilon, seed)",
            "POST /api/v1/estimate": "Estimate a distribution from privatized reports",
            "POST /api/v1/experiments": "Run a small privatize-then-estimate sweep",
        },
        "documentation": "/docs"
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("app.main:app", host=settings.api_host, port=settings.api_port, reload=settings.debug)
