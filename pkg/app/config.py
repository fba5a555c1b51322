import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    # Starvation-count distribution
    J_MAX = int(os.getenv("BSC_J_MAX", "32"))
    EPS_TRUNC = float(os.getenv("BSC_EPS_TRUNC", "1e-6"))
    PHI_BOUND = os.getenv("BSC_PHI_BOUND", "display")

    # Quasi-stationary tail cut for enumerated states
    QUASI_TAIL_EPS = 1e-9

    # Bitrate ladder conversion
    FRAME_RATE = float(os.getenv("BSC_FRAME_RATE", "25"))
    SVC_OVERHEAD = 1.10
    PAIR_CONVERSION = os.getenv("BSC_PAIR_CONVERSION", "aggregate")
    LADDER_WEIGHTING = os.getenv("BSC_LADDER_WEIGHTING", "kbps")
    QUALITY_MODE = os.getenv("BSC_QUALITY_MODE", "fraction")

    # Simulation
    DEFAULT_SEED = int(os.getenv("BSC_SEED", "20160601"))
    DEFAULT_RUNS = int(os.getenv("BSC_RUNS", "4000"))
    WORKERS = int(os.getenv("BSC_WORKERS", "1"))
    LOGISTIC_SCALE_RATIO = float(os.getenv("BSC_LOGISTIC_SCALE_RATIO", "0.125"))
    ONOFF_DUTY_CYCLE = float(os.getenv("BSC_ONOFF_DUTY_CYCLE", "0.7"))
    ONOFF_CYCLE_FRAMES = float(os.getenv("BSC_ONOFF_CYCLE_FRAMES", "50"))
    QUALITY_FALLBACK_RUNS = int(os.getenv("BSC_QUALITY_FALLBACK_RUNS", "200"))
    CHAIN_MAX_STEPS = 5_000_000

    # Exhaustive enumeration budget
    ORACLE_MAX_N = int(os.getenv("BSC_ORACLE_MAX_N", "10"))

    # Output
    SIGNIFICANT_DIGITS = 12
    LOG_LEVEL = os.getenv("BSC_LOG_LEVEL", "INFO")

    @classmethod
    def validate_config(cls):
        if cls.J_MAX < 1:
            raise ValueError("BSC_J_MAX must be at least 1")
        if not 0.0 <= cls.EPS_TRUNC < 1.0:
            raise ValueError("BSC_EPS_TRUNC must lie in [0, 1)")
        if cls.PHI_BOUND not in ("display", "proof"):
            raise ValueError("BSC_PHI_BOUND must be 'display' or 'proof'")
        if cls.PAIR_CONVERSION not in ("aggregate", "layered"):
            raise ValueError("BSC_PAIR_CONVERSION must be 'aggregate' or 'layered'")
        if cls.LADDER_WEIGHTING not in ("kbps", "proportional"):
            raise ValueError("BSC_LADDER_WEIGHTING must be 'kbps' or 'proportional'")
        if cls.QUALITY_MODE not in ("fraction", "absolute"):
            raise ValueError("BSC_QUALITY_MODE must be 'fraction' or 'absolute'")
        if cls.FRAME_RATE <= 0:
            raise ValueError("BSC_FRAME_RATE must be positive")
        if cls.WORKERS < 1:
            raise ValueError("BSC_WORKERS must be at least 1")
        if cls.ORACLE_MAX_N < 1:
            raise ValueError("BSC_ORACLE_MAX_N must be at least 1")
        if cls.LOGISTIC_SCALE_RATIO <= 0:
            raise ValueError("BSC_LOGISTIC_SCALE_RATIO must be positive")
        if not 0.0 < cls.ONOFF_DUTY_CYCLE < 1.0:
            raise ValueError("BSC_ONOFF_DUTY_CYCLE must lie in (0, 1)")
        if cls.ONOFF_CYCLE_FRAMES <= 0:
            raise ValueError("BSC_ONOFF_CYCLE_FRAMES must be positive")
