"""Neural-network training with grey wolf search, GA events and SGD on the leaders."""

from .baselines import SgdConfig, SlpsoConfig, sgd_train, slpso_train
from .data import Dataset, load_cifar10, make_blobs, split
from .hybrid import GmwConfig, TrainLog, evaluate_model, gmw_sgd_train
from .moo import ParetoReport, gmw_sgd_moo_train
from .nn import Network, NetworkSpec, param_count

__all__ = [
    "Dataset", "GmwConfig", "Network", "NetworkSpec", "ParetoReport", "SgdConfig", "SlpsoConfig",
    "TrainLog", "evaluate_model", "gmw_sgd_moo_train", "gmw_sgd_train", "load_cifar10",
    "make_blobs", "param_count", "sgd_train", "slpso_train", "split",
]
__version__ = "0.1.0"
