"""Truncated Fock representations of product systems and their invariant subspaces."""

__version__ = "0.1.0"

from .basis import GradedBasis, ProductSystemSpec  # noqa: E402
from .errors import CapacityError, CompletenessError, DomainError, FockmodError, PreconditionError  # noqa: E402
from .fockrep import CovariantTuple, check_axioms, induced_tuple  # noqa: E402

__all__ = [
    "CapacityError", "CompletenessError", "CovariantTuple", "DomainError", "FockmodError", "GradedBasis",
    "PreconditionError", "ProductSystemSpec", "check_axioms", "induced_tuple",
]
