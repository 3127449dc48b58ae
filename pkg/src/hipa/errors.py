"""Exception types shared across the package."""


class HipaError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(HipaError):
    """Operands have incompatible shapes for the requested operation."""


class InvalidHyperparam(HipaError):
    """A layer or kernel hyperparameter is out of its valid range."""


class NotDivisible(HipaError):
    """An extent violates a divisibility precondition (patching, splitting)."""


class NotScalar(HipaError):
    """backward() was called on a non-scalar tensor."""


class NoTape(HipaError):
    """backward() was called on a tensor not recorded on an active tape."""


class UnsupportedScale(HipaError):
    """Requested upsampling factor is not one of {2, 3, 4}."""


class DecodeError(HipaError):
    """An image file could not be decoded."""


class UnsupportedColorType(HipaError):
    """An image uses a color mode outside RGB/RGBA/grayscale."""


class InvalidSize(HipaError):
    """A requested spatial size is invalid for the operation."""


class TooSmall(HipaError):
    """An image or crop is smaller than the operation requires."""


class MissingGrad(HipaError):
    """Optimizer step requested but a parameter has no gradient."""


class ConfigError(HipaError):
    """A config file or config value could not be parsed/validated."""


class ConfigMismatch(HipaError):
    """A checkpoint's embedded config disagrees with the expected config."""


class CorruptCheckpoint(HipaError):
    """A checkpoint file has a bad magic, version, or is truncated."""


class NanLossError(HipaError):
    """Training loss became non-finite."""

    def __init__(self, step, batch_ids):
        self.step = step
        self.batch_ids = list(batch_ids)
        super().__init__(
            f"non-finite loss at step {step}, batch: {', '.join(self.batch_ids)}"
        )


class DataError(HipaError):
    """A dataset manifest or its referenced files are unusable."""
