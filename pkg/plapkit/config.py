# plapkit/config.py
from typing import Optional
from pydantic_settings import BaseSettings

VERSION = "0.1.0"
SCHEMA_VERSION = "1"


class Settings(BaseSettings):
    # Output
    OUTPUT_DIR: str = "out"
    LOG_LEVEL: str = "INFO"
    SEED: int = 0

    # Inequality suite
    INEQ_REL_TOL: float = 1e-10
    INEQ_P2_TOL: float = 1e-12

    # Model manifolds
    QUAD_EPSREL: float = 1e-9
    QUAD_LIMIT: int = 200
    MODEL_R0: float = 1.0
    MODEL_R_MAX: float = 1e6
    MODEL_DELTA: float = 1e-3

    # Solver
    SOLVER_TOL: float = 1e-8
    SOLVER_MAX_ITER: int = 100_000
    SOLVER_EPS_REG: float = 1e-12
    SOLVER_STEP_TOL: float = 1e-12

    # KNR audit
    KNR_GROWTH_TOL: float = 0.05
    KNR_DIV_FLOOR: float = 1e-6

    # Harness
    OSC_TOL: float = 1e-6
    DECAY_FACTOR: float = 0.9
    COERCIVITY_REL_TOL: float = 1e-9

    # Plots
    SVG_HASHSALT: Optional[str] = "plapkit"

    # pydantic-settings v2 config (preferred)
    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "env_prefix": "PLAPKIT_",
        "extra": "allow",
        "case_sensitive": False,
    }


# single settings instance used throughout the package
settings = Settings()
