"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented status codes (1 = bad input, 2 = degenerate data, 3 = internal).
"""


class FaintSigError(Exception):
    exit_code = 3


class InputError(FaintSigError):
    exit_code = 1


class DegenerateError(FaintSigError):
    exit_code = 2


# ingest
class MissingFrame(InputError):
    def __init__(self, index):
        super().__init__(f"frame {index} is missing from the sequence")
        self.index = index


class DimensionMismatch(InputError):
    pass


class BadImage(InputError):
    pass


class CountMismatch(InputError):
    pass


class LandmarkError(InputError):
    pass


class DegenerateQuad(DegenerateError):
    pass


# signal processing
class TooShort(InputError):
    pass


class BandOutOfRange(InputError):
    pass


class DegenerateSignal(DegenerateError):
    pass


class NoPeak(DegenerateError):
    pass


class ZeroVariance(DegenerateError):
    pass


class NumericalBreakdown(DegenerateError):
    pass


# fingerprints
class TooShortVideo(InputError):
    pass


class LengthMismatch(InputError):
    pass


class ShapeError(InputError):
    pass


class MetadataMissing(InputError):
    pass


# network / evaluation
class ShapeMismatch(InputError):
    pass


class NonFiniteLoss(FaintSigError):
    pass


class SingleClassDataset(InputError):
    pass


class SegmentMismatch(InputError):
    pass


class EmptyInput(InputError):
    pass


class LeakageError(InputError):
    pass


class SpecInvalid(InputError):
    pass
