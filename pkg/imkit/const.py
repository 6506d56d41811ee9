"""Constants for the imkit package."""

DOMAIN = "imkit"

# Environment
THREADS_ENV = "IMKIT_THREADS"

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# Reproducibility
DEFAULT_SEED = 20221031
FLOAT_FORMAT = ".17g"

# Finite differences
FD_STEP_FACTOR = 1e-6
ROUND_TRIP_RTOL = 1e-9

# Monte Carlo
MC_CHUNK_SIZE = 4096
MIN_DRAWS = 100
MIN_VALIDITY_SIMS = 1000
KS_LEVEL = 0.99

# Engine grids
DEFAULT_GRID_POINTS = 512

# Characteristics solver
GAUSS_LEGENDRE_NODES = 8
PICARD_TOL = 1e-12
PICARD_MAX_ITER = 200
PICARD_STALL_LIMIT = 3
CERTIFY_SAFETY = 0.9
RANK_RTOL = 1e-8
MAX_CONTINUATION_STEPS = 200

# Regularity detection
REGULARITY_GRID_POINTS = 21
REGULARITY_TOL = 1e-5
TABULATION_POINTS = 401
MAX_EXCLUDED_FRACTION = 0.5

# Brownian slice quadrature
SLICE_QUANTILE = 1e-10
SLICE_GRID_POINTS = 400
SLICE_LOG_DROP = 40.0

# Model identifiers
MODEL_GAUSSIAN_MEAN = "gaussian-mean"
MODEL_GAUSSIAN_LOCATION_SCALE = "gaussian-location-scale"
MODEL_BROWNIAN = "brownian"
MODEL_BROWNIAN_RATIO = "brownian-ratio"
MODEL_EXPRESSION = "expression"

# Run configuration keys
CONF_CONFIG = "config"
CONF_MODEL = "model"
CONF_MODEL_PARAMS = "model_params"
CONF_MODEL_FILE = "model_file"
CONF_FIELD_FILE = "field_file"
CONF_X = "x"
CONF_DATA = "data"
CONF_SIMULATE = "simulate"
CONF_GRID = "grid"
CONF_U_RANGE = "u_range"
CONF_THETA_RANGE = "theta_range"
CONF_ALPHA = "alpha"
CONF_N_DRAWS = "n_draws"
CONF_N_SIM = "n_sim"
CONF_SAMPLE_SIZE = "sample_size"
CONF_TOL = "tol"
CONF_PRS_SCALE = "prs_scale"
CONF_SEED = "seed"
CONF_THREADS = "threads"
CONF_OUTPUT = "output"
CONF_Q_OUTPUT = "q_output"
CONF_FORMAT = "format"
CONF_LOG_LEVEL = "log_level"

# Run configuration defaults
DEFAULT_ALPHA = 0.05
DEFAULT_N_SIM = 10000
DEFAULT_CONDITIONING_SAMPLE = 20
DEFAULT_CERTIFICATE_TOL = 1e-6
