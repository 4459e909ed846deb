"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke an operation's documented precondition."""


class PreconditionError(ContractViolation):
    """A construction's standing assumption does not hold for the given inputs."""


class NonConvergence(ArithmeticError):
    def __init__(self, message, last_iterate=None, iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class DivergedTraining(ArithmeticError):
    def __init__(self, epoch, message=None):
        super().__init__(message or f"training diverged (non-finite loss) in epoch {epoch}")
        self.epoch = epoch


class UnsoundBound(ContractViolation):
    """A lower Lipschitz estimate was supplied where an upper bound is required."""


class TooLarge(ContractViolation):
    pass


class ParseError(ValueError):
    """Malformed binary/text input. ``offset`` is the byte (or line) position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormat(ParseError):
    pass


class VersionError(ParseError):
    pass


class UtteranceError(ContractViolation):
    def __init__(self, uid, cause):
        super().__init__(f"utterance {uid}: {cause}")
        self.uid = uid
