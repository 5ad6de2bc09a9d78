"""Exception types raised across the package."""


class MonoliftError(Exception):
    """Base class for every error raised by monolift."""


# geometry
class DegenerateDepth(MonoliftError):
    """Point lies on the principal plane of the camera."""


class BehindCamera(MonoliftError):
    """A box corner projects with non-positive depth."""


# lift solver
class SingularSystem(MonoliftError):
    """The constraint system has a numerically singular normal matrix."""


class NoValidSolution(MonoliftError):
    """Every constraint configuration was rejected."""


# losses
class ZeroVector(MonoliftError):
    pass


class NonPositive(MonoliftError):
    pass


# shiftnet
class UnfittedScaler(MonoliftError):
    pass


class EmptyDataset(MonoliftError):
    pass


class FormatVersionMismatch(MonoliftError):
    """Model file is truncated, has the wrong magic, or an unknown version."""


class IoFailure(MonoliftError, OSError):
    pass


# kitti io
class KittiFormatError(MonoliftError, ValueError):
    """Base class for malformed KITTI text."""


class FieldCount(KittiFormatError):
    pass


class ParseError(KittiFormatError):
    pass


class RangeError(KittiFormatError):
    pass


class MissingP2(KittiFormatError):
    pass


class MissingScore(MonoliftError):
    pass


class Degenerate(MonoliftError):
    """Perturbation could not produce a usable sample."""


# evaluation
class EmptyGroundTruth(MonoliftError):
    pass


class EmptyInput(MonoliftError):
    pass
