"""Supervised and margin contrastive training with FGSM evaluation on a from-scratch autodiff core."""

from .model import ModelConfig, ModelParams, forward, init_model, two_stream_forward
from .tensor import Tensor, backward

__all__ = ["ModelConfig", "ModelParams", "Tensor", "backward", "forward", "init_model", "two_stream_forward"]
__version__ = "0.1.0"
