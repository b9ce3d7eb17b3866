from mro.conic.backends import (
    DEFAULT_TOL,
    Backend,
    ClarabelBackend,
    CvxoptBackend,
    ScsBackend,
    Tolerances,
    available_backends,
    get_backend,
)
from mro.conic.binary import DEFAULT_CAP, solve, solve_mixed_binary
from mro.conic.expr import Expr
from mro.conic.ir import (
    CONE_KINDS,
    CapabilityError,
    ConeBlock,
    ConicProgram,
    ProgramBuilder,
    ProgramTooLargeError,
    Solution,
)

__all__ = [
    "CONE_KINDS",
    "DEFAULT_CAP",
    "DEFAULT_TOL",
    "Backend",
    "CapabilityError",
    "ClarabelBackend",
    "ConeBlock",
    "ConicProgram",
    "CvxoptBackend",
    "Expr",
    "ProgramBuilder",
    "ProgramTooLargeError",
    "ScsBackend",
    "Solution",
    "Tolerances",
    "available_backends",
    "get_backend",
    "solve",
    "solve_mixed_binary",
]
