"""Mixed finite-element core: spaces, assembly, constraints and solvers."""

from .assembly import (
    BlockSystem,
    DirichletBC,
    FieldEval,
    PointConstraint,
    Term,
    WeakForm,
    apply_point_constraint,
    assemble,
    residual,
)
from .solve import NewtonSettings, newton_solve, solve_linear
from .spaces import BlockLayout, BlockVector, FunctionSpace, make_space

__all__ = [
    "BlockLayout",
    "BlockSystem",
    "BlockVector",
    "DirichletBC",
    "FieldEval",
    "FunctionSpace",
    "NewtonSettings",
    "PointConstraint",
    "Term",
    "WeakForm",
    "apply_point_constraint",
    "assemble",
    "make_space",
    "newton_solve",
    "residual",
    "solve_linear",
]
