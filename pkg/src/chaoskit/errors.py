"""Exception types raised by chaoskit."""


class ChaoskitError(ValueError):
    """Base class for all chaoskit errors."""


class NotABijection(ChaoskitError):
    pass


class LevelTooCoarse(ChaoskitError):
    pass


class LevelMismatch(ChaoskitError):
    pass


class EmptySet(ChaoskitError):
    pass


class ClosureCapExceeded(ChaoskitError):
    pass


class GeneratorMovesComplement(ChaoskitError):
    pass


class UnknownAtom(ChaoskitError):
    pass


class ModelMismatch(ChaoskitError):
    pass


class IndexOutOfRange(ChaoskitError):
    pass


class EmptyInterval(ChaoskitError):
    pass


class DegenerateBasis(ChaoskitError):
    pass


class BadSymmetry(ChaoskitError):
    pass


class DegreeOverflow(ChaoskitError):
    pass


class NoConvergence(RuntimeWarning):
    """Issued (not raised) when a Picard solve hits its iteration cap."""
