"""Minimal deterministic numeric core used by every trainable model."""

from .errors import DimensionError, NumericalError, UsageError
from .layers import (add_dense, add_lstm, conv2d, conv_transpose2d, dense, grad_check,
                     leaky_relu, linear_forward, lstm_step)
from .params import (ParamSet, adam_step, atomic_write_text, check_finite_loss, dumps_values,
                     load_checkpoint, loads_values, save_checkpoint)
from .rng import Rng, make_rng
from .tensor import Tensor, concat, l2_normalize, log_softmax, logsumexp, no_grad, tensor

__all__ = [
    "DimensionError", "NumericalError", "UsageError",
    "ParamSet", "Rng", "Tensor",
    "adam_step", "add_dense", "add_lstm", "atomic_write_text", "check_finite_loss", "concat",
    "conv2d", "conv_transpose2d", "dense", "dumps_values", "grad_check", "l2_normalize",
    "leaky_relu", "linear_forward", "load_checkpoint", "loads_values", "log_softmax",
    "logsumexp", "lstm_step", "make_rng", "no_grad", "save_checkpoint", "tensor",
]
