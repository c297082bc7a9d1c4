import os

ROOT_DIRECTORY = os.path.dirname(os.path.realpath(__file__))

# Define the folder for storing reports
REPORTS_DIRECTORY = f"{ROOT_DIRECTORY}/REPORTS"

VERSION = "0.3.0"

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(filename)s:%(lineno)s - %(message)s"

# Can be changed to a specific number
SWEEP_THREADS = os.cpu_count() or 8
THREADS_ENV_VAR = "RIESZ_AC_THREADS"

####
#### OPERATOR SIZE GUARDS
####

# Largest (M-1) for which a dense K_gamma is ever built
DENSE_LIMIT = 4096
# Largest (M-1) factorized with Cholesky when stepping in 1D; above this CG is used
CHOLESKY_LIMIT = 2048
# Largest (M-1) for the dense eigensolve helpers
SPECTRAL_LIMIT = 512

####
#### SOLVER TOLERANCES
####

LINEAR_TOL = 1e-12
CUBIC_TOL = 1e-14
CUBIC_MAX_ITER = 100
# CG gives up after CG_ITER_FACTOR * (M-1)^d iterations
CG_ITER_FACTOR = 10

GAMMA_STAR_GUESS = 1.5
GAMMA_STAR_TOL = 1e-12
NEWTON_MAX_ITER = 100

# Slack for the max-norm and energy monitors
MAX_NORM_SLACK = 1e-12
ENERGY_SLACK = 1e-12

# Grid-size to h conversion must be exact up to this
H_MATCH_TOL = 1e-9

####
#### EXPERIMENT SWEEPS
####

# Formula accuracy, u(x) = x^4 (1-x)^4, h = 1/M
TABLE1_GAMMAS = (1.1, 1.3, 1.5, 1.7, 1.9, 2.0)
TABLE2_GAMMAS = (0.1, 0.3, 0.5, 0.7, 0.9)
FORMULA_GRID_SIZES = (20, 30, 40, 50, 60)
# Errors are measured on the central half; x^4 (1-x)^4 extended by zero is only C^3 across the endpoints,
# which leaves an O(h^(4-gamma)) layer at the first and last nodes
FORMULA_ERROR_WINDOW = (0.25, 0.75)

# Forced Allen-Cahn, u(x, t) = exp(-t) x^6 (1-x)^6, ladder of (1/tau, 1/h)
TABLE3_GAMMAS = (1.2, 1.4, 1.6, 1.8)
TABLE3_LADDER = ((8, 8), (64, 16), (512, 32))
TABLE3_EPSILON = 0.001
TABLE3_T = 1.0

# Maximum principle and energy runs
MAXPRINCIPLE_GAMMAS = (1.2, 1.5, 1.8)
MAXPRINCIPLE_TAUS = (1.0, 0.5, 0.1, 0.05)
MAXPRINCIPLE_H = 0.01
MAXPRINCIPLE_EPSILON = 0.1
# Long enough for the max-norm curves to flatten
MAXPRINCIPLE_T = 20.0
# Random bounded initials, U(-1, 1) at every node
RANDOM_INITIAL_SEED = 20240607
RANDOM_INITIAL_T = 2.0
ENERGY_BOUND_FRACTION = 0.9

# Error surface runs
ERROR_SURFACE_GAMMA = 1.3
ERROR_SURFACE_EPSILON = 0.005
ERROR_SURFACE_TAU = 0.005
ERROR_SURFACE_H = 0.005
# ERROR_SURFACE_GAMMA = 1.7
# ERROR_SURFACE_EPSILON = 0.01
# ERROR_SURFACE_TAU = 0.02
# ERROR_SURFACE_H = 0.001
ERROR_SURFACE_STRIDE = 10

####
#### OUTPUT
####

CSV_FLOAT_FORMAT = "%.16e"
# 16 significant digits
COEFF_FLOAT_FORMAT = "%.15e"
