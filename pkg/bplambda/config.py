# bplambda/config.py v1.0
"""Configuration settings for the BP(lambda) toolkit"""

# Input/Output settings
OUTPUT_DIR = "runs"
DATA_DIR_ENV = "BPLAMBDA_DATA_DIR"  # MNIST IDX directory; nothing is ever downloaded
VERIFY_REPORT_NAME = "verification_report.jsonl"

# Numerics
FD_STEP = 1e-6            # central finite differences
FD_REL_TOL = 1e-5         # Jacobian / VJP agreement
EXACT_TOL = 1e-10         # identities that hold up to rounding
TARGET_TOL = 1e-12        # target-definition coherence
DEGENERACY_TOL = 1e-12    # equivalence check non-degeneracy threshold

# Optimiser defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Model defaults
LSTM_FORGET_BIAS = 1.0

# Task thresholds
COPY_SOLVED_BITS = 0.15
PLASTIC_SOLVED_ERROR = 0.025
PLASTIC_SOLVED_WINDOW = 20   # last 20 ...
PLASTIC_EPOCHS = 250         # ... of 250 epochs
MNIST_VALIDATION_SIZE = 10000

# Equivalence acceptance (frozen after first calibration)
EQUIVALENCE_ALPHAS = (1e-2, 1e-3, 1e-4, 1e-5)
EQUIVALENCE_MAX_RATIO = 0.05
TD_GAP_ALPHAS = (1e-2, 1e-4)

# Desk-scale caps applied when --desk-scale is set; model sizes are never reduced
DESK_SCALE = {
    'toy_fixed': {'epochs': 100, 'batches_per_epoch': 100},
    'toy_plastic': {'epochs': 250, 'batches_per_epoch': 10, 'max_length': 30},
    'seq_mnist': {'epochs': 10, 'train_images': 5000, 'eval_images': 1000},
    'copy_repeat': {'budget_seconds': 900},
}

# Logging
VERBOSE = True
DEBUG = False
