"""Numerical defaults shared by the lab. Physical parameters never live here."""

VERSION = "0.3.0"

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

OUTPUT_DIR = "runs"
MODULES_DIR = "modules"

# Time stepping
CFL = 0.25
PM_STEP_CAP = 2e-3

# Inverse reformulation
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
EQUILIBRIUM_TOL = 1e-14

# Fractions below this are treated as degenerate
DEGENERATE_FRACTION = 1e-8

# Littlewood-Paley
THRESHOLD_OFFSET = -2
OVERLAP_SPLIT = True
MIN_LP_POINTS = 8
MIN_SOLVER_POINTS = 32

# Spectral analysis
RATIO_THRESHOLD = 0.1
CUBIC_DEAD_ZONE = 1e-13
ROOT_RESIDUAL_TOL = 1e-9

# Sweeps
FIT_R2_FLOOR = 0.98
WORKERS = 1
RENDER_INTERVAL = 2.0

CSV_FLOAT_FORMAT = "%.17g"
