# main/config.py
import os

# Smoothing schedule
EPS_HARD_FLOOR = 1e-8  # caps weights at EPS_HARD_FLOOR**(p-2)
EPS_TILDE = 1e-6  # must exceed EPS_HARD_FLOOR
EPS_INIT = 1.0
MAX_OUTER_ITERS = 50
PR_MAX_OUTER_ITERS = 100

# Stop once ||grad f_eps|| <= STATIONARITY_TOL * (1 + f_eps) with eps unchanged
STATIONARITY_TOL = 1e-8

# Stall detection on the outer loop
STALL_WINDOW = 5
STALL_TOLERANCE = 1e-15

# Levenberg-Marquardt defaults
INNER_MAX_ITERS = 200
INNER_GRAD_TOL = 1e-10
INNER_STEP_TOL = 1e-12
LAMBDA_INIT = 1e-3
LAMBDA_UP = 10.0
LAMBDA_DOWN = 0.1
LAMBDA_MAX = 1e12
RIDGE_FACTOR = 1e-14
MAX_HALVINGS = 40

# Finite differences
FD_RELATIVE_STEP = 1e-6

# Greedy harness
GREEDY_BUDGET_FACTOR = 3
GREEDY_FALLBACK_CANDIDATES = 5
GREEDY_RESIDUAL_TOL = 1e-9

# Experiments
SUCCESS_THRESHOLD = 0.01
IMPULSIVE_SUCCESS_THRESHOLD = 0.05
DESK_N, DESK_M = 20, 12
PAPER_N, PAPER_M = 80, 30
RIP_SOLUTION_NORM = 0.015
PR_OMEGA = 100.0
RNG_NAME = "philox"

# Worker pools
MULTISTART_WORKERS = 4
EXPERIMENT_WORKERS = 4

# Database
DATABASE_URL = os.getenv("IRLS_DATABASE_URL", "sqlite:///./irls_runs.db")
SETTINGS_FILE = os.getenv("IRLS_SETTINGS_FILE", "irls_settings.json")
