"""
Configuration module for the Compressive Privatization service.

Centralizes all environment variable access and validation.
All configuration must be accessed through this module - DO NOT use os.getenv() directly.
"""

import os
from pathlib import Path
from typing import Any, Dict, List

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file (if present)
load_dotenv()


# ==========================================
# Experiment Profiles
# ==========================================
# Desk scale runs on a laptop in minutes; paper scale matches the published setup.
PROFILES: Dict[str, Dict[str, Any]] = {
    "desk": {
        "k": 2000,
        "m": 300,
        "epsilon": 0.5,
        "dist": "unif:10",
        "trials": 10,
        "n_grid": [50_000, 100_000, 200_000, 400_000, 800_000],
    },
    "paper": {
        "k": 10_000,
        "m": 500,
        "epsilon": 0.5,
        "dist": "unif:10",
        "trials": 10,
        "n_grid": [50_000 * i for i in range(1, 21)],
    },
}


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.

    Every field can be overridden with an upper-case environment variable
    of the same name, e.g. ``OVERSAMPLE=6`` or ``MAX_WORKERS=4``.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ==========================================
    # Application Settings
    # ==========================================
    app_name: str = Field(
        default="Compressive Privatization API",
        description="Application name"
    )

    app_version: str = Field(
        default="1.0.0",
        description="Application version"
    )

    environment: str = Field(
        default="development",
        description="Environment: development, staging, production"
    )

    debug: bool = Field(
        default=False,
        description="Debug mode"
    )

    # ==========================================
    # API Server Settings
    # ==========================================
    api_host: str = Field(
        default="0.0.0.0",
        description="API server host"
    )

    api_port: int = Field(
        default=8000,
        description="API server port"
    )

    max_api_reports: int = Field(
        default=2_000_000,
        gt=0,
        description="Maximum number of privatized reports accepted per estimate request"
    )

    max_api_universe: int = Field(
        default=20_000,
        gt=0,
        description="Largest universe size k served over HTTP"
    )

    # ==========================================
    # Logging and Output
    # ==========================================
    log_level: str = Field(
        default="INFO",
        description="Logging level: DEBUG, INFO, WARNING, ERROR"
    )

    log_dir: Path = Field(
        default=Path("logs"),
        description="Directory for rotating log files"
    )

    results_dir: Path = Field(
        default=Path("results"),
        description="Default directory for experiment CSV and JSON output"
    )

    # ==========================================
    # Estimation Settings
    # ==========================================
    default_epsilon: float = Field(
        default=0.5,
        gt=0,
        description="Privacy parameter used when none is given"
    )

    oversample: float = Field(
        default=4.0,
        gt=0,
        description="Constant in the advisory sizing rule m >= oversample * s * ln(k/s)"
    )

    omp_tolerance: float = Field(
        default=1e-10,
        gt=0,
        description="Residual norm below which orthogonal matching pursuit stops early"
    )

    # ==========================================
    # Harness Settings
    # ==========================================
    max_workers: int = Field(
        default=1,
        ge=1,
        description="Worker processes for experiment sweeps (1 runs serially)"
    )

    record_timing: bool = Field(
        default=False,
        description="Record wall-clock milliseconds per row (breaks byte-identical reruns)"
    )

    # ==========================================
    # Validation Methods
    # ==========================================

    def get_profile(self, name: str) -> Dict[str, Any]:
        """
        Look up an experiment profile by name.

        Raises:
            ValueError: If the profile does not exist
        """
        try:
            return dict(PROFILES[name])
        except KeyError:
            raise ValueError(
                f"Unknown profile '{name}'. Available: {', '.join(sorted(PROFILES))}"
            ) from None

    def validate_startup_config(self) -> dict:
        """
        Validate configuration at startup and return status.

        Returns:
            Dict with validation results and warnings
        """
        status: Dict[str, List[str]] = {
            "warnings": [],
            "errors": []
        }

        if self.log_level.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            status["errors"].append(f"Invalid LOG_LEVEL '{self.log_level}'")

        cpu_count = os.cpu_count() or 1
        if self.max_workers > cpu_count:
            status["warnings"].append(
                f"MAX_WORKERS={self.max_workers} exceeds available CPUs ({cpu_count})"
            )

        if self.record_timing:
            status["warnings"].append(
                "RECORD_TIMING enabled - result CSVs will not be byte-identical across reruns"
            )

        if self.oversample < 2:
            status["warnings"].append(
                f"OVERSAMPLE={self.oversample} is low - sparse recovery may be unreliable"
            )

        return status


# ==========================================
# Global Settings Instance
# ==========================================
settings = Settings()
