"""
Constantes globales pour ChazyScatter
"""

# Informations du programme
APP_TITLE = "ChazyScatter"
APP_VERSION = "1.0.0"

# Seuil de collision (distance entre deux corps)
COLLISION_THRESHOLD = 1e-8

# Tolérances d'intégration par défaut
DEFAULT_RTOL = 1e-11
DEFAULT_ATOL = 1e-12
# Tolérance absolue sur rho, relative à atol (rho décroît exponentiellement)
RHO_ATOL_FACTOR = 1e-10

# Critères de convergence vers un équilibre à l'infini
RHO_EQ = 1e-9
W_EQ = 1e-8
V_EQ = 1e-8
# Fenêtre de convergence: Δτ = CONVERGENCE_WINDOW / |v0|
CONVERGENCE_WINDOW = 2.0

# Contrôle des invariants
ENERGY_TOLERANCE = 1e-9
CONSTRAINT_TOLERANCE = 1e-10
FRAME_TOLERANCE = 1e-9

# Intégration par segments
SEGMENT_LENGTH = 0.25
SAMPLE_STEP = 0.02

# Graine sur les variétés stables/instables
SEED_SCALE = 1e-3
RICHARDSON_LEVELS = 4
# Budget en τ pour la diffusion: TAU_BUDGET_FACTOR / sqrt(2h)
TAU_BUDGET_FACTOR = 50.0

# Extraction des paramètres asymptotiques
WINDOW_MAX = 1e-4
MIN_WINDOW_SAMPLES = 12
FIT_CONDITION_LIMIT = 1e8

# Quadratures et rang
QUADRATURE_TOLERANCE = 1e-10
SVD_THRESHOLD = 1e-8
PATH_SAMPLES = 721

# Écart relatif maximal admis par la commande kepler-check
KEPLER_CHECK_THRESHOLD = 1e-6

# Tolérance en dessous de laquelle les échecs sont attribués à la précision machine
MIN_RELIABLE_RTOL = 1e-13

# Export CSV
CSV_FORMAT_VERSION = 1
CSV_FLOAT_DIGITS = 17

# Chemins des fichiers
DEFAULT_CONFIG_FILE = "settings.json"
DEFAULT_OUTPUT_DIRECTORY = "results"
TRAJECTORY_FILE = "trajectory.csv"
TRAJECTORY_RECORDS_FILE = "trajectory.jsonl"
METADATA_FILE = "metadata.json"
SCATTER_FILE = "scatter.jsonl"
SWEEP_FILE = "sweep.jsonl"
SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"
ERROR_FILE = "error.json"
KEPLER_CHECK_FILE = "kepler_check.json"

# Codes de sortie
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2

# Statuts des orbites calculées
STATUS_OK = "ok"
STATUS_SINGULAR = "singular"
STATUS_UNDETERMINED = "undetermined"
STATUS_FAILED = "failed"
