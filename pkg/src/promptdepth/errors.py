"""Exception types shared across the package."""


class PromptDepthError(Exception):
    """Base class for all package errors."""


class ShapeError(PromptDepthError, ValueError):
    """Operands have incompatible or illegal shapes."""


class ParameterError(PromptDepthError, ValueError):
    """A numeric parameter is outside its legal range."""


class GraphError(PromptDepthError, RuntimeError):
    """Misuse of the autodiff tape (non-scalar loss, untaped tensor, ...)."""


class ContractError(PromptDepthError, ValueError):
    """A documented call precondition was violated."""


class ConfigError(PromptDepthError, ValueError):
    """Inconsistent network or training configuration."""


class InputError(PromptDepthError, ValueError):
    """Input data is unusable (empty mask, no valid pixels, ...)."""


class DegenerateScaleError(PromptDepthError, ValueError):
    """Depth normalization range collapses (d_max == d_min)."""


class AlignmentError(PromptDepthError, RuntimeError):
    """Scale/shift alignment could not be estimated."""


class PoseError(PromptDepthError, ValueError):
    """Camera pose is not a rigid transform or is inside geometry."""


class CheckpointError(PromptDepthError, ValueError):
    """Checkpoint file is malformed or inconsistent with the config."""


class DivergenceError(PromptDepthError, RuntimeError):
    """Training produced a non-finite loss."""
