"""Reverse-mode automatic differentiation engine."""
from .kernel import BACKEND
from .tape import (
    ParamTensor,
    Tape,
    TapeStateError,
    Var,
    backward,
    combine,
    dot,
    grad_of,
    hardmax,
    lse,
    lut_eval_diff,
    map_sum,
    min0,
    softmax,
    value,
    vsum,
)

__all__ = [
    "BACKEND", "ParamTensor", "Tape", "TapeStateError", "Var", "backward", "combine", "dot",
    "grad_of", "hardmax", "lse", "lut_eval_diff", "map_sum", "min0", "softmax", "value", "vsum",
]
