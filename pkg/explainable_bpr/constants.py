"""Constants for explainable-bpr package."""

# Package version
PACKAGE_VERSION = "0.1.0"

# Data preparation
DEFAULT_BINARIZE_THRESHOLD = 0.0
DEFAULT_MIN_INTERACTIONS = 10
DEFAULT_EVAL_NEGATIVES = 100
DEFAULT_SPARSITY_THRESHOLDS = [5, 10, 15, 20, 25, 30, 35, 40]

# Explainability
DEFAULT_ETA = 20
DEFAULT_SWEEP_ETAS = [5, 10, 20, 50, 100]

# Propensity
DEFAULT_PROPENSITY_FLOOR = 1e-3

# Model
DEFAULT_INIT_SCALE = 0.01

# Training
DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MAX_EPOCHS = 200
DEFAULT_PATIENCE = 20
DEFAULT_LATENT_DIM = 20
DEFAULT_BATCH_SIZE = 100
DEFAULT_L2 = 0.0

# Hyperparameter grids (latent dim, batch size, L2)
LATENT_DIM_GRID = [5, 10, 20, 50, 100]
BATCH_SIZE_GRID = [50, 100, 500]
L2_GRID = [0.0, 1e-5, 1e-3]
DEFAULT_SEARCH_CONFIGS = 15
DEFAULT_SEARCH_REPLICATES = 2

# Evaluation
DEFAULT_CUTOFF = 10
DEFAULT_UNBIASED_CUTOFF = 5
DEFAULT_RELEVANCE_THRESHOLD = 4.0
DEFAULT_REPLICATES = 5

# Bias oracle
DEFAULT_ORACLE_USERS = 6
DEFAULT_ORACLE_ITEMS = 12
DEFAULT_ORACLE_ETA = 3
DEFAULT_ORACLE_DRAWS = 10_000
MIN_ORACLE_DRAWS = 1_000
ORACLE_THETA_RANGE = (0.2, 1.0)
ORACLE_GAMMA_RANGE = (0.1, 0.9)
ORACLE_Z_THRESHOLD = 3.0
ORACLE_DRAW_CHUNK = 1_000

# Environment
ENV_DATA_DIR = "EBPR_DATA_DIR"

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Tool Names
TOOL_RECOMMEND = "ebpr_recommend"
TOOL_EXPLAIN = "ebpr_explain"
TOOL_DATASET_STATS = "ebpr_dataset_stats"
