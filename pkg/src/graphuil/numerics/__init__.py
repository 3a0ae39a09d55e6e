from . import autodiff
from .adam import AdamState, adam_step
from .autodiff import Tensor, grad, value_and_grad
from .gradcheck import GradCheckReport, finite_diff_check
from .params import ParamSet

__all__ = ["AdamState", "GradCheckReport", "ParamSet", "Tensor", "adam_step", "autodiff",
           "finite_diff_check", "grad", "value_and_grad"]
