"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
to distinct process exit statuses.
"""


class AtnquantError(Exception):
    exit_code = 1


class ConfigError(AtnquantError):
    exit_code = 2


# volume I/O
class NiftiError(AtnquantError):
    exit_code = 10


class BadMagic(NiftiError):
    exit_code = 11


class UnsupportedDatatype(NiftiError):
    exit_code = 12


class TruncatedData(NiftiError):
    exit_code = 13


class NonFiniteVoxels(NiftiError):
    exit_code = 14


class UnsupportedFormat(NiftiError):
    """NIfTI-2, >3 spatial dims, or anything else we refuse to read."""
    exit_code = 15


# geometry
class SingularTransform(AtnquantError):
    exit_code = 20


class GeometryMismatch(AtnquantError):
    exit_code = 21


# ROI statistics
class EmptyRegion(AtnquantError):
    exit_code = 30


class ZeroReference(AtnquantError):
    exit_code = 31


# scales
class UnknownTracer(AtnquantError):
    exit_code = 40


class ScaleMismatch(AtnquantError):
    exit_code = 41


class DegenerateAnchors(AtnquantError):
    exit_code = 42


class DegenerateFit(AtnquantError):
    exit_code = 43


class RegistryInconsistent(AtnquantError):
    exit_code = 44


# staging
class AgeOutOfRange(AtnquantError):
    exit_code = 50


class MissingStructure(AtnquantError):
    exit_code = 51


class OutOfRange(AtnquantError):
    exit_code = 52


# statistics
class DegenerateAnova(AtnquantError):
    exit_code = 60


class ZeroPooledSd(AtnquantError):
    exit_code = 61


# mask derivation
class MissingPartner(AtnquantError):
    exit_code = 70


class EmptySelection(AtnquantError):
    exit_code = 71


# phantom / report
class OverlappingBlocks(AtnquantError):
    exit_code = 80


class IncompleteResult(AtnquantError):
    exit_code = 90
