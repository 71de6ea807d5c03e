"""
Constants for cfrag.
All pipeline-wide defaults are defined here for easy configuration.
"""

# Embedding settings
EMBEDDING_DIM = 768  # d for real corpora (BGE base)
MAX_HISTORY = 64  # histories are truncated to the most recent MAX_HISTORY documents

# Retrieval settings
TOP_K = 5
TOP_M = 4
ALPHA = 0.5  # weight of the user preference score
USER_SELECTION = "top_m"

# User encoder settings
ENCODER_LAYERS = 1
ENCODER_HEADS = 2
FFN_MULTIPLIER = 4  # feed-forward hidden size = 4d
LAYER_NORM_EPS = 1e-5
INIT_SCALE = 0.1  # std of the positional table and mask embedding at init

# Contrastive learning settings
TAU = 0.1
CROP_RATIO = 0.7
MASK_RATIO = 0.3
REORDER_RATIO = 0.3
CONTRASTIVE_BATCH_SIZE = 16
USER_EPOCHS = 10

# Optimization settings
LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
RETRIEVER_STEPS = 200
RERANKER_STEPS = 200
SEED = 17

# Hyper-parameter grids (grid-search mode)
M_GRID = (2, 3, 4, 5, 6)
TAU_GRID = (0.01, 0.1, 1.0)
ALPHA_RANGE = (0.01, 1.0)
LEARNING_RATE_GRID = (1e-3, 1e-4, 1e-5)

# Feedback settings
FEEDBACK_WORKERS = 4  # W, generation requests in flight
REQUEST_TIMEOUT = 60.0
MAX_RETRIES = 4
BACKOFF_MAX_WAIT = 8.0

# Task ids
GENERATION_TASKS = ("LaMP-4", "LaMP-5", "LaMP-7", "synthetic")
CLASSIFICATION_TASKS = ("LaMP-1", "LaMP-2")
RATING_TASKS = ("LaMP-3",)
ALL_TASKS = ("LaMP-1", "LaMP-2", "LaMP-3", "LaMP-4", "LaMP-5", "LaMP-7", "synthetic")
RATING_MIDPOINT = 3.0  # imputed for unparseable LaMP-3 predictions
RATING_WORST_GAP = 4.0  # worst |pred - target| on the 1-5 scale
OUTPUT_FIELDS = {"LaMP-4": "title", "LaMP-5": "title", "LaMP-7": "tweet", "synthetic": "answer"}

# Binary formats
EMBEDDING_CACHE_MAGIC = b"CFRAGEMB"
RETRIEVER_MAGIC = b"CFRAGRET"
RERANKER_MAGIC = b"CFRAGRRK"
USER_ENCODER_MAGIC = b"CFRAGUSR"
CHECKPOINT_VERSION = 1

# Environment variables
LLM_TOKEN_ENV = "CFRAG_LLM_TOKEN"
EMBED_TOKEN_ENV = "CFRAG_EMBED_TOKEN"

# File names inside a run directory
USER_ENCODER_FILE = "user_encoder.ckpt"
RETRIEVER_FILE = "retriever.ckpt"
RERANKER_FILE = "reranker.ckpt"
USER_INDEX_FILE = "user_index.emb"
FEEDBACK_CACHE_FILE = "feedback_cache.jsonl"
TRAIN_REPORT_FILE = "train_report.json"
REPORT_FILE = "report.json"
SAMPLES_CSV = "samples.csv"
LOSSES_CSV = "losses.csv"
