"""Typed exceptions raised by the package."""


class SbeedlabError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SbeedlabError):
    """An input table violates a structural invariant."""


class ShapeMismatch(ValidationError):
    """Array shapes are inconsistent with each other or with the MDP."""


class NegativeEntry(ValidationError):
    """A probability table contains a negative entry."""


class NonStochasticRow(ValidationError):
    """A probability row does not sum to one within tolerance."""


class RewardOutOfRange(ValidationError):
    """A reward entry lies outside [0, r_max] or r_max is not finite."""


class DiscountOutOfRange(ValidationError):
    """The discount factor lies outside [0, 1)."""


class ZeroSupport(ValidationError):
    """A data distribution has a zero cell where full support is required."""


class ClassConstraintViolation(ValidationError):
    """A function-class member breaks its range or normalization constraint."""


class ZeroProbabilityAction(SbeedlabError):
    """ln pi(a|s) was requested at a cell where pi(a|s) = 0."""


class SingularSystem(SbeedlabError):
    """A linear system that should be invertible failed to solve."""


class MaxIterExceeded(SbeedlabError):
    """Fixed-point iteration hit the iteration cap before converging."""


class InfeasibleSpec(SbeedlabError):
    """A class-construction request cannot produce valid members."""


class EnsembleTooSmall(SbeedlabError):
    """Too few datasets for the requested statistical check."""


class InvalidDelta(SbeedlabError):
    """Confidence parameter outside (0, 1)."""


class LambdaTooLarge(SbeedlabError):
    """Regularization too large for the requested accuracy target."""


class NegativeInput(SbeedlabError):
    """An argument that must be nonnegative is negative."""


class PolicyNotInClass(SbeedlabError):
    """A solution policy is not a member of the supplied policy class."""


class IoError(SbeedlabError):
    """Report emission refused or failed (existing files, empty records)."""
