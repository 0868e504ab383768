"""Hierarchical visual-prefix fusion for multimodal sequence labelling and relation classification,
built on a small numpy reverse-mode autodiff engine, with a synthetic benchmark."""

from .config import ModelConfig, tiny_config
from .model import Batch, HVPModel
from .synth import SyntheticSpec, generate_corpus
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = ["Batch", "HVPModel", "ModelConfig", "SyntheticSpec", "TrainConfig", "generate_corpus",
           "tiny_config", "train"]
