from . import tensor as ops
from .gradcheck import finite_difference_check, numerical_gradient, relative_error
from .io import TensorFormatError, load_tensor, read_tensor, save_tensor, write_tensor
from .rng import make_rng
from .tensor import (
    ContractError,
    DomainError,
    GradMap,
    GradTape,
    NonFiniteError,
    ShapeError,
    Tensor,
    backward,
    check_finite,
)

__all__ = [
    "ContractError",
    "DomainError",
    "GradMap",
    "GradTape",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "TensorFormatError",
    "backward",
    "check_finite",
    "finite_difference_check",
    "load_tensor",
    "make_rng",
    "numerical_gradient",
    "ops",
    "read_tensor",
    "relative_error",
    "save_tensor",
    "write_tensor",
]
