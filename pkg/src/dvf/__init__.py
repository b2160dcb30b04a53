"""Discrete variational formulations on collocation grids and robust-loss PINN training."""

__version__ = "0.1.0"

from dvf.grid import Grid  # noqa: E402
from dvf.field import GridFunction, dot  # noqa: E402
from dvf.calculus import (  # noqa: E402
    Dx,
    Dy,
    Sign,
    diff,
    div,
    grad,
    inner_grad_h,
    inner_h,
    integrate,
    integrate_bd,
    laplacian_h,
    nabla,
    norm_h,
    pi0,
    seminorm_grad_h,
    shift,
)
from dvf.spaces import (  # noqa: E402
    CompositeFunctionSpace,
    DofSet,
    FunctionSpace,
    TensorFunctionSpace,
    VectorFunctionSpace,
    reinsert_dofs,
    remove_dofs,
    select_dofs,
)
from dvf.assembly import BilinearForm, assemble, assemble_dense  # noqa: E402

__all__ = [
    "Grid",
    "GridFunction",
    "dot",
    "Sign",
    "shift",
    "diff",
    "Dx",
    "Dy",
    "grad",
    "nabla",
    "div",
    "laplacian_h",
    "pi0",
    "integrate",
    "integrate_bd",
    "inner_h",
    "norm_h",
    "inner_grad_h",
    "seminorm_grad_h",
    "FunctionSpace",
    "VectorFunctionSpace",
    "TensorFunctionSpace",
    "CompositeFunctionSpace",
    "DofSet",
    "select_dofs",
    "remove_dofs",
    "reinsert_dofs",
    "BilinearForm",
    "assemble",
    "assemble_dense",
]
