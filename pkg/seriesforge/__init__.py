from ._version import get_version
from .data import ScalerParams
from .data import SeriesBatch
from .data import SineConfig
from .data import export_csv
from .data import generate_sines
from .data import load_csv
from .metrics import EvalReport
from .metrics import ScorerBudget
from .metrics import discriminative_score
from .metrics import pca_project
from .metrics import predictive_score
from .metrics import run_replications
from .metrics import tsne_project
from .numkit import DomainError
from .numkit import Rng
from .numkit import ShapeError
from .training import Checkpoint
from .training import NonFiniteLossError
from .training import SeriesGAN
from .training import TrainConfig
from .training import load_checkpoint
from .training import save_checkpoint


__version__ = get_version()


__all__ = [
    "Checkpoint",
    "DomainError",
    "EvalReport",
    "NonFiniteLossError",
    "Rng",
    "ScalerParams",
    "ScorerBudget",
    "SeriesBatch",
    "SeriesGAN",
    "ShapeError",
    "SineConfig",
    "TrainConfig",
    "discriminative_score",
    "export_csv",
    "generate_sines",
    "load_csv",
    "load_checkpoint",
    "pca_project",
    "predictive_score",
    "run_replications",
    "save_checkpoint",
    "tsne_project",
]
