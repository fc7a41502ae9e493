"""trispan: tri-modal answer-span localization for instructional videos.

Fuses visual, audio, and textual feature sequences with cross-modal
attention, trains three span predictors jointly under an IoU-weighted
mutual-consistency objective, and evaluates temporal localization
quality in seconds.
"""

from .autograd import (
    Parameter,
    Tape,
    Tensor,
    backward,
    default_dtype,
    no_grad,
    precision,
    set_default_dtype,
)
from .gradcheck import grad_check

__version__ = "0.1.0"

__all__ = [
    "Parameter",
    "Tape",
    "Tensor",
    "backward",
    "default_dtype",
    "grad_check",
    "no_grad",
    "precision",
    "set_default_dtype",
    "__version__",
]
