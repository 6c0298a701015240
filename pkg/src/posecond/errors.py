"""Exception hierarchy shared by all modules."""


class PosecondError(Exception):
    """Base class for every error raised by this package."""


# pose_io
class PoseFormatError(PosecondError, ValueError):
    pass


class FieldCountError(PoseFormatError):
    pass


class NumericError(PoseFormatError):
    pass


class NonOrthonormalRotation(PosecondError, ValueError):
    pass


class InvalidIntrinsics(PosecondError, ValueError):
    pass


class EmptySequence(PoseFormatError):
    pass


class NonMonotonicTimestamps(PoseFormatError):
    pass


# plucker
class DegenerateIntrinsics(PosecondError, ValueError):
    pass


class ZeroStride(PosecondError, ValueError):
    pass


class StrideExceedsImage(PosecondError, ValueError):
    pass


class SequenceTooShort(PosecondError, ValueError):
    pass


class PointBehindCamera(PosecondError, ValueError):
    pass


# motion_render
class FrameOutOfRange(PosecondError, IndexError):
    pass


class IoError(PosecondError, OSError):
    pass


# tensor_core / pose_vae / tai
class ShapeMismatch(PosecondError, ValueError):
    pass


class NonFiniteValue(PosecondError, FloatingPointError):
    pass


class NonFiniteLoss(NonFiniteValue):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


class FrameCountMismatch(ShapeMismatch):
    pass


class StepOutOfRange(PosecondError, IndexError):
    pass


class CheckpointError(PosecondError, ValueError):
    pass


# metrics
class LengthMismatch(PosecondError, ValueError):
    def __init__(self, len_a, len_b):
        super().__init__(f"sequence lengths differ: {len_a} vs {len_b}")
        self.len_a = len_a
        self.len_b = len_b


class GridMismatch(PosecondError, ValueError):
    pass
