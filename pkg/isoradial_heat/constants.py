import math

FAMILIES = ("square", "triangular", "rhombic-tracks")
SPACING_CONVENTIONS = ("spacing", "circumdiameter")
VARIANTS = ("variable-speed", "constant-speed")
REGIMES = ("euclidean", "graph", "ldp")

CONFIG_SCHEMA_VERSION = 1
GRAPH_SCHEMA_VERSION = 1

# ---------------------------------------------------------------------------
# Tolerances
# ---------------------------------------------------------------------------

# Relative to h.
GEOMETRY_TOL = 1e-9
DEFAULT_ROW_TOL = 1e-10
DEFAULT_ENTRY_REL_TOL = 1e-6
# Rounding allowance per uniformization step, relative.
ROUNDING_PER_STEP = 4 * 2.0**-52
SPANNER_CONSTANT = 1.998
DEFAULT_ANGLE_MARGIN = 1e-2
EXHAUSTIVE_PAIR_LIMIT = 2000
DENSE_EIGEN_LIMIT = 600
FLAG_FRACTION = 0.01

HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

# ---------------------------------------------------------------------------
# Sweep windows
# ---------------------------------------------------------------------------

MAX_WINDOW_ATTEMPTS = 6
# Extra lattice steps added to every window radius and every regrowth.
WINDOW_MARGIN = 10
# Extent of the small window used to size the real one.
SIZING_EXTENT = 4

# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2
EXIT_CERTIFICATE = 3

ENV_THREADS = "ISORADIAL_HEAT_THREADS"
ENV_TOL = "ISORADIAL_HEAT_TOL"
ENV_LOG_LEVEL = "ISORADIAL_HEAT_LOG_LEVEL"
ENV_CONFIGS_DIR = "ISORADIAL_HEAT_CONFIGS_DIR"

SHIPPED_CONFIGS = (
    "square.yaml",
    "triangular.yaml",
    "rhombic.yaml",
    "euclidean_demo.yaml",
    "graph_demo.yaml",
    "ldp_demo.yaml",
)

# Walk sampling chunk; one RNG stream per chunk index.
WALK_CHUNK = 4096
