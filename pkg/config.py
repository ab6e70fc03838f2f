# config.py
# Environment-driven settings. Scenario files carry the physics; these only
# decide where files live and how long the solver may run.

import logging
import os

from dotenv import load_dotenv

# Load environment variables from a .env file next to the working directory.
load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

# --- Paths ---
DATA_DIR = os.getenv("MISSION_DATA_DIR", os.path.join(BASE_DIR, "data"))
SCENARIO_DIR = os.getenv("MISSION_SCENARIO_DIR", os.path.join(DATA_DIR, "scenarios"))
SCHEMA_DIR = os.getenv("MISSION_SCHEMA_DIR", os.path.join(DATA_DIR, "schemas"))
OUTPUT_DIR = os.getenv("MISSION_OUTPUT_DIR", "output")

# --- Solver ---
MILP_GAP = float(os.getenv("MISSION_MILP_GAP", "1e-6"))
MILP_TIME_BUDGET = float(os.getenv("MISSION_MILP_TIME_BUDGET", "300"))

# --- Runs ---
DEFAULT_SEED = int(os.getenv("MISSION_DEFAULT_SEED", "7"))
LOG_LEVEL = os.getenv("MISSION_LOG_LEVEL", "INFO").upper()
CORS_ORIGINS = os.getenv("MISSION_CORS_ORIGINS", "*")

LOG_FORMAT = "[%(name)s] %(levelname)s %(message)s"


def configure_logging(level=None):
    """Set up root logging once for the CLI and the HTTP service."""
    logging.basicConfig(level=level or LOG_LEVEL, format=LOG_FORMAT)
