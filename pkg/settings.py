import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_SEED = int(os.getenv("ENSEMBLE_SEED", "2024"))
ECE_BINS = int(os.getenv("ECE_BINS", "10"))
DECISION_THRESHOLD = float(os.getenv("DECISION_THRESHOLD", "0.5"))
OUTPUT_DIR = (os.getenv("ENSEMBLE_OUTPUT_DIR") or "runs").strip()
LOG_LEVEL = (os.getenv("LOG_LEVEL") or "INFO").strip().upper()

# Empty means "no run ledger"
RUNS_DATABASE_URL = (os.getenv("RUNS_DATABASE_URL") or "").strip() or None
