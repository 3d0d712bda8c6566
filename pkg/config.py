"""
Runtime configuration for lmflow.
Reads defaults from the environment (and a local .env file when present).
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Experiment defaults
DEFAULT_SEED = int(os.getenv("LMFLOW_SEED", 0))
OUT_DIR = os.getenv("LMFLOW_OUT_DIR", "results")
EPS = float(os.getenv("LMFLOW_EPS", 1e-6))
MAX_ITER = int(os.getenv("LMFLOW_MAX_ITER", 10000))

# Step-rule parameters shared by every experiment
ALPHA = 0.8
ETA_STAR = 0.5

# Scalar solver
ETA_TOL = float(os.getenv("LMFLOW_ETA_TOL", 1e-12))
BRACKET_CAP = 1e6
MAX_BACKTRACKS = 200  # per outer step, multiplier and Armijo loops alike

# Perturbed splitting fallback
PERTURBATION_EPS = float(os.getenv("LMFLOW_PERTURBATION", 1e-3))

# Slack used when checking inequalities in floating point
CERT_SLACK = float(os.getenv("LMFLOW_CERT_SLACK", 1e-9))
DISSIPATION_SLACK = 1e-10

# API server
PORT = int(os.getenv("PORT", 8000))

# Comma-separated origins allowed by the API's CORS middleware
CORS_ORIGINS = os.getenv("LMFLOW_CORS_ORIGINS", "http://localhost:3000").split(",")
