"""Globally accessible constants"""

from os.path import abspath, dirname, join

# RosePO Lab ASCII.
ASCII = r"""
 ____                 ____   ___    _           _
|  _ \ ___  ___  ___ |  _ \ / _ \  | |    __ _ | |__
| |_) / _ \/ __|/ _ \| |_) | | | | | |   / _` || '_ \
|  _ < (_) \__ \  __/|  __/| |_| | | |__| (_| || |_) |
|_| \_\___/|___/\___||_|    \___/  |_____\__,_||_.__/
"""

# Absolute paths to the plug-in folders.
PACKAGE_DIRECTORY = dirname(dirname(abspath(__file__)))
OBJECTIVES_DIRECTORY = join(PACKAGE_DIRECTORY, "objectives")
SAMPLERS_DIRECTORY = join(PACKAGE_DIRECTORY, "samplers")

# Sequence protocol.
HISTORY_LENGTH = 10
WINDOW_LENGTH = HISTORY_LENGTH + 1
CANDIDATE_COUNT = 20
TRAIN_QUANTILE = 0.8
VALID_QUANTILE = 0.9

# Preference optimization.
BETA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0)
EPSILON_FLOOR = 1e-4
EPSILON_CEILING = 1 - 1e-4

# Evaluation.
DEFAULT_KS = (1, 5, 10, 20)
SIMILARITY_SINGULARITY = 1e-8

# Fallback embedding width for the co-occurrence SVD.
FALLBACK_EMBEDDING_DIM = 32

# Checkpoint container.
CHECKPOINT_MAGIC = b"RPOL"
CHECKPOINT_FORMAT = 1

# Prepared data directory layout.
EXAMPLES_FILE = "examples.jsonl"
RECORDS_FILE = "records.jsonl"
ITEMS_FILE = "items.tsv"
POPULARITY_FILE = "popularity.tsv"
EMBEDDINGS_FILE = "embeddings.tsv"
STATISTICS_FILE = "statistics.csv"
MANIFEST_FILE = "manifest.txt"

# Run directory layout.
CONFIG_FILE = "config.txt"
CHECKPOINTS_DIRECTORY = "checkpoints"
METRICS_FILE = "metrics.csv"
REPORT_FILE = "report.csv"
BIAS_FILE = "bias.csv"
BIAS_SUMMARY_FILE = "bias_summary.csv"
SUMMARY_FILE = "summary.txt"
