"""
Constants and default configuration for the COCOA toolkit
Every tunable default lives here; dataclass configs read from this module.
"""

# Encoder architecture (temporal conv stack + projection + shared fusion)
KERNEL_SIZES = (10, 8, 4)
FILTER_COUNTS = (24, 48, 20)
PROJECTION_DIM = 32
FUSION_DIM = 32
LAYER_NORM_EPS = 1e-5

# Optimizer
LEARNING_RATE = 0.001
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Loss hyper-parameters
DEFAULT_TAU = 0.1
DEFAULT_LAMBDA = 1.0
DCL_EPSILON = 1e-7
HARD_DCL_BETA = 1.0
BARLOW_LAMBDA = 0.005
BARLOW_EPS = 1e-9
TAU_GRID = (0.1, 0.5, 1.0)

# Training protocol
MAX_EPOCHS = 100
EARLY_STOP_PATIENCE = 5
DEFAULT_BATCH_SIZE = 16
NUM_SEEDS = 5
BATCH_GRID = (8, 32, 128)
LABEL_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

# Methods
SSL_METHODS = ("cocoa", "infonce", "dcl", "hard_dcl", "barlow", "cmc")
CROSS_MODAL_METHODS = ("cocoa", "cmc")
PAIR_METHODS = ("infonce", "dcl", "hard_dcl", "barlow")
ALL_METHODS = SSL_METHODS + ("supervised",)

# Windowing and splitting
DEFAULT_OVERLAP = 0.5
SPLIT_FRACTIONS = {"train": 0.72, "val": 0.08, "test": 0.20}
SPLIT_BLOCKS = 10

# Synthetic data
SYNTH_NUM_CLASSES = 4
SYNTH_NUM_MODALITIES = 3
SYNTH_CHANNELS = 3
SYNTH_WINDOW = 64
SYNTH_WINDOWS_PER_CLASS = 300
SYNTH_NOISE_STD = 0.5
SYNTH_SEGMENT_WINDOWS = 10
SYNTH_AMPLITUDE_RANGE = (0.5, 1.5)
SYNTH_DISTRACTOR_RATIO = 8.0

# File formats
DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
LABELS_FILE = "labels.u32"
WINDOW_IDS_FILE = "window_ids.u64"
STARTS_FILE = "starts.u64"
CHECKPOINT_MAGIC = b"COCO"
CHECKPOINT_VERSION = 1
CHECKPOINT_NAME = "encoder.bin"
CHECKPOINT_CONFIG_NAME = "encoder.json"
CLASSIFIER_NAME = "classifier.bin"
EXPORT_DELIMITER = ","
BENCH_DELIMITER = "\t"

# Environment
DATA_DIR_ENV = "COCOA_DATA_DIR"
DEFAULT_DATA_DIR = "data"
SLOW_TESTS_ENV = "COCOA_RUN_SLOW"

# CLI exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

# Metrics record fields, in output order
METRICS_FIELDS = (
    "run_id", "kind", "stage", "method", "epoch", "train_loss", "val_loss",
    "macro_f1", "similarity_evaluations", "batches", "batch_size", "seed",
    "label_fraction", "wall_seconds",
)
