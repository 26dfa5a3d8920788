"""Exception types raised across longitrack."""


class LongitrackError(Exception):
    """Base class for all package errors."""


class FormatError(LongitrackError, ValueError):
    pass


class IoError(LongitrackError, OSError):
    pass


class ShapeMismatch(LongitrackError, ValueError):
    pass


class PromptOutOfPatch(LongitrackError, ValueError):
    pass


class MissingChannel(LongitrackError, ValueError):
    pass


class UnknownLesion(LongitrackError, KeyError):
    pass


class SeedInPadding(LongitrackError, ValueError):
    pass


class EmptyEnsemble(LongitrackError, ValueError):
    pass


class DuplicateLesion(LongitrackError, ValueError):
    pass


class ReservedLabel(LongitrackError, ValueError):
    pass


class NoLesions(LongitrackError, ValueError):
    pass


class NoPatients(LongitrackError, ValueError):
    pass


class DuplicateId(LongitrackError, ValueError):
    pass


class PlacementFailed(LongitrackError, RuntimeError):
    pass


class ConfigError(LongitrackError, ValueError):
    pass
