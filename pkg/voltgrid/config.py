"""
Configuration file for solver tolerances, agent hyperparameters and paths.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

ARTIFACT_VERSION = "1.0.0"

# Output configuration
RUNS_DIR = os.getenv("VOLTGRID_RUNS_DIR", "runs")

# Logging configuration
LOG_LEVEL = os.getenv("VOLTGRID_LOG", "INFO").upper()
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_FILE_NAME = "voltgrid.log"

# Power flow
SWEEP_TOL = 1e-10
SWEEP_MAX_ITER = 200
EXACTNESS_TOL = 1e-5
MIN_SQUARED_VOLTAGE = 1e-6  # sweep aborts below this

# Fast-timescale solvers
QP_TOL = 1e-8
QP_MAX_ITER = 20000
SOCP_TOL = 1e-6
SOCP_MAX_ITER = 20000
ADMM_RHO = 1.0
ADMM_BALANCE_RATIO = 10.0
ROUNDING_THRESHOLD = 0.5
ENUMERATION_LIMIT = 12

# Slow-timescale agent
EPSILON_STEP = 0.1
EPSILON_PERIOD = 50
LEARNING_RATE = 1e-3
VOLTAGE_BUDGET = 0.05  # p.u. deviation per bus-slot used for cost_scale

HYPERPARAMETER_PRESETS = {
    "sce47": {
        "gamma": 0.99,
        "replay": 10,
        "batch": 10,
        "target_sync": 5,
        "hyper_k": 1,
        "hidden": (44, 12),
        "slots_per_interval": 5,
    },
    "ieee123": {
        "gamma": 0.99,
        "replay": 50,
        "batch": 8,
        "target_sync": 10,
        "hyper_k": 64,
        "hidden": (44, 12),
        "slots_per_interval": 5,
    },
}
DEFAULT_PRESET = "sce47"
