"""
Exceptions raised by noisy_targets.

Every error carries the process exit code the ``noisy_targets`` management
command returns when the error escapes a stage.
"""


class NoisyTargetsError(Exception):
    """
    Base class for all errors raised by this package.
    """

    exit_code = 1


class ConfigurationError(NoisyTargetsError):
    """
    A parameter block, knowledge base or config file is invalid.
    """

    exit_code = 2


class InvalidInputError(NoisyTargetsError):
    """
    Input data violates a precondition of an operation.
    """

    exit_code = 3


class DataFileError(InvalidInputError):
    """
    An expected input file does not exist.
    """

    def __init__(self, path, message=None):
        self.path = str(path)
        super().__init__(message or f"missing input file: {self.path}")


class ParseError(InvalidInputError):
    """
    An input file is malformed.
    """

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ConstraintViolationError(NoisyTargetsError):
    """
    A structural constraint on samples or targets is violated.
    """

    exit_code = 4


class TooFewSamplesError(ConstraintViolationError):
    pass


class DiversityViolationError(ConstraintViolationError):
    """
    Some pairs of noisy samples are not diverse.

    ``positions`` holds the offending ``(i, j)`` list positions with ``i < j``;
    ``pairs`` holds the sample ids at those positions.
    """

    def __init__(self, positions, sample_ids):
        self.positions = [tuple(pair) for pair in positions]
        self.pairs = [(sample_ids[i], sample_ids[j]) for i, j in self.positions]
        listed = ", ".join(
            f"positions ({i}, {j}) with ids ({a}, {b})" for (i, j), (a, b) in zip(self.positions, self.pairs)
        )
        super().__init__(f"noisy samples are not pairwise diverse: {listed}")


class RearrangementError(ConstraintViolationError):
    pass


class TargetMultiplicityError(RearrangementError):
    """
    Fewer than two targets per instance.
    """


class DivergenceError(NoisyTargetsError):
    """
    Training produced a non-finite loss.
    """

    exit_code = 5

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")


class InternalConsistencyError(NoisyTargetsError):
    pass


class StageError(NoisyTargetsError):
    """
    Wraps an error raised inside a named pipeline stage.
    """

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", NoisyTargetsError.exit_code)
        super().__init__(f"stage '{stage}' failed: {cause}")
