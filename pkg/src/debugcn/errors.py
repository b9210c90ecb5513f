"""Exception hierarchy shared across the toolkit."""


class DebugcnError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(DebugcnError, ValueError):
    """Operand shapes are incompatible for an operation."""


class ValidationError(DebugcnError, ValueError):
    """Input data violates a documented invariant (non-finite values, bad dims, ...)."""


class BundleParseError(DebugcnError, ValueError):
    """A bundle/checkpoint file could not be parsed."""


class BadMagicError(BundleParseError):
    pass


class TruncatedPayloadError(BundleParseError):
    pass


class TrailingDataError(BundleParseError):
    pass


class MissingTensorError(BundleParseError):
    pass


class TensorRankError(BundleParseError):
    pass


class ManifestError(DebugcnError, ValueError):
    """Manifest file is malformed or references bad bundles."""


class StratificationError(DebugcnError, ValueError):
    """Dataset cannot be split with both classes in both halves."""


class ConfigurationError(DebugcnError, ValueError):
    """Model/trainer configuration mismatch (branch arity, missing tensors, bad keys)."""


class StateError(DebugcnError, RuntimeError):
    """Operation requires a trained or loaded model."""
