"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so callers (and the
CLI exit-code mapping) can tell them apart from bad input.
"""


class ModelError(ValueError):
    """Invalid model description (generator, drift, schedule, rates)."""


class ConfigError(ValueError):
    """Invalid problem configuration file.

    ``key`` holds the dotted key path of the offending entry.
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class NumericalError(ArithmeticError):
    """Base class for failures of the numerical pipeline."""


class SpectralSplitError(NumericalError):
    """The stable/unstable invariant-subspace split could not be formed."""


class ScalarRootError(NumericalError):
    """No unique root of the scalar crossing quadratic lies in [0, 1]."""


class SingularSystemError(NumericalError):
    """A linear system of the block recursion is (numerically) singular."""

    def __init__(self, block, message):
        self.block = block
        super().__init__(f"block {block}: {message}")


class InversionError(NumericalError):
    """The transform evaluator failed at an inversion node."""

    def __init__(self, node, cause):
        self.node = node
        self.cause = cause
        super().__init__(f"transform evaluation failed at node {node}: {cause}")
