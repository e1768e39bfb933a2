"""
Process-level settings read from the environment (.env supported)
"""

import os

from dotenv import load_dotenv

load_dotenv()

# Logging level for the CLI root logger
LOG_LEVEL = os.getenv("FUSION_LOG_LEVEL", "INFO").upper()

# Run registry URL, e.g. sqlite:///./runs.db (unset: runs are not recorded)
DATABASE_URL = os.getenv("FUSION_DATABASE_URL") or None

# Default output directory for run/sweep artifacts
OUTPUT_DIR = os.getenv("FUSION_OUTPUT_DIR", "results")

# Sweep worker processes
WORKERS = int(os.getenv("FUSION_WORKERS", "1"))
