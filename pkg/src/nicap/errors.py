"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Operand shapes are inconsistent with an operation's contract."""


class FileFormatError(ValueError):
    """A binary or JSON artifact failed magic/version/payload validation."""


class ConfigMismatchError(ValueError):
    """Inputs disagree with a model/checkpoint configuration."""


class MissingGradError(RuntimeError):
    """An optimizer step found a trainable parameter without a gradient."""
