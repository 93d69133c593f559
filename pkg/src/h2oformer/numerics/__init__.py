from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradcheckReport, finite_diff_check
from .optim import SGD, sgd_step, step_decay_lr
from .tensor import Parameter, Tape, Tensor, as_tensor, no_grad, resolve_dtype, zero_grads

__all__ = [
    "ops", "Tensor", "Parameter", "Tape", "as_tensor", "no_grad", "resolve_dtype", "zero_grads",
    "finite_diff_check", "GradcheckReport", "SGD", "sgd_step", "step_decay_lr",
    "save_checkpoint", "load_checkpoint",
]
