"""Configuration management for the NLKG lab."""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

class Config:
    """Configuration class for the NLKG lab."""

    # Grid
    R_MAX: float = float(os.getenv("NLKG_R_MAX", "60"))
    N: int = int(os.getenv("NLKG_N", "4096"))

    # Evolution
    CFL: float = float(os.getenv("NLKG_CFL", "0.4"))
    T_END: float = float(os.getenv("NLKG_T_END", "50"))
    SAMPLE_SPACING: float = float(os.getenv("NLKG_SAMPLE_SPACING", "0.01"))
    BLOWUP_H1_FACTOR: float = float(os.getenv("NLKG_BLOWUP_H1_FACTOR", "1000"))
    BLOWUP_AMP: float = float(os.getenv("NLKG_BLOWUP_AMP", "1e6"))
    GROWTH_FACTOR: float = float(os.getenv("NLKG_GROWTH_FACTOR", "10"))

    # Solver tolerances
    TOL_RES: float = float(os.getenv("NLKG_TOL_RES", "1e-8"))
    TOL_K: float = float(os.getenv("NLKG_TOL_K", "1e-6"))
    TOL_K_EXTRAPOLATED: float = float(os.getenv("NLKG_TOL_K_EXTRAPOLATED", "1e-6"))
    SHOOT_RTOL: float = float(os.getenv("NLKG_SHOOT_RTOL", "1e-11"))
    SOLVE_REFINE: int = int(os.getenv("NLKG_SOLVE_REFINE", "7"))
    MAX_DESCENT_ITERS: int = int(os.getenv("NLKG_MAX_DESCENT_ITERS", "3000"))

    # Orchestration
    WORKERS: int = int(os.getenv("NLKG_WORKERS", "1"))
    SEED: int = int(os.getenv("NLKG_SEED", "0"))
    OUT_DIR: str = os.getenv("NLKG_OUT_DIR", "runs")
    LOG_LEVEL: str = os.getenv("NLKG_LOG_LEVEL", "INFO")

    @classmethod
    def validate(cls) -> bool:
        """Validate that configuration values are in range."""
        if cls.N < 16:
            raise ValueError("NLKG_N must be at least 16")
        if cls.R_MAX <= 0:
            raise ValueError("NLKG_R_MAX must be positive")
        if not 0 < cls.CFL < 1:
            raise ValueError("NLKG_CFL must lie in (0, 1)")
        if cls.T_END <= 0 or cls.SAMPLE_SPACING <= 0:
            raise ValueError("NLKG_T_END and NLKG_SAMPLE_SPACING must be positive")
        for name in ("TOL_RES", "TOL_K", "TOL_K_EXTRAPOLATED", "SHOOT_RTOL"):
            if getattr(cls, name) <= 0:
                raise ValueError(f"NLKG_{name} must be positive")
        if cls.BLOWUP_H1_FACTOR <= 1 or cls.BLOWUP_AMP <= 0 or cls.GROWTH_FACTOR <= 1:
            raise ValueError("blow-up thresholds must exceed the initial scale")
        if cls.SOLVE_REFINE < 1 or cls.SOLVE_REFINE % 2 == 0:
            raise ValueError("NLKG_SOLVE_REFINE must be a positive odd integer")
        if cls.WORKERS < 1:
            raise ValueError("NLKG_WORKERS must be at least 1")
        return True

# Global config instance
config = Config()
