"""Simulator Configuration"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Process-level simulator configuration"""

    BASE_PATH = os.path.dirname(os.path.abspath(__file__))

    # Folder paths
    DATA_FOLDER = os.getenv("FLSIM_DATA_DIR", os.path.join(BASE_PATH, "data"))
    OUTPUT_FOLDER = os.getenv("FLSIM_OUTPUT_DIR", os.path.join(BASE_PATH, "runs"))

    # Logging
    LOG_LEVEL = os.getenv("FLSIM_LOG_LEVEL", "INFO")

    # Parallelism: client workers per round, torch intra-op threads
    DEFAULT_THREADS = int(os.getenv("FLSIM_THREADS", "1"))
    TORCH_THREADS = int(os.getenv("FLSIM_TORCH_THREADS", "1"))

    ARTIFACT_VERSION = "1.0.0"

    # MNIST IDX file names looked up inside a data directory (plain or .gz)
    MNIST_FILES = {
        "train_images": "train-images-idx3-ubyte",
        "train_labels": "train-labels-idx1-ubyte",
        "test_images": "t10k-images-idx3-ubyte",
        "test_labels": "t10k-labels-idx1-ubyte",
    }
