"""Multi-population ensemble genetic programming for classification."""

from .config import MegpConfig, default_model_configs
from .datasets import (Dataset, SplitDataset, SplitSpec, generate_synthetic,
                       load_csv_dataset, save_csv, split_dataset)
from .evolution import (GenerationRecord, RunResult, run_bgp, run_megp)
from .rng import derive_seed, make_rng

__version__ = "0.1.0"

__all__ = [
    "MegpConfig", "default_model_configs",
    "Dataset", "SplitDataset", "SplitSpec", "generate_synthetic",
    "load_csv_dataset", "save_csv", "split_dataset",
    "GenerationRecord", "RunResult", "run_bgp", "run_megp",
    "derive_seed", "make_rng",
    "__version__",
]
