"""Exception types shared across the package."""


class FedsimError(Exception):
    """Base class for all package errors."""


class ParameterError(FedsimError, ValueError):
    """Unsupported or out-of-range primitive parameters."""


class ConfigError(FedsimError, ValueError):
    """Invalid run configuration."""


class ProtocolError(FedsimError, RuntimeError):
    """Protocol contract violated (bad key, missing/duplicate submission, ...)."""


class EncodingError(FedsimError, ValueError):
    """Value not representable by the fixed-point codec."""


class IngestionError(FedsimError, ValueError):
    """Input data file malformed or incomplete."""


class EvaluationError(FedsimError, ValueError):
    """Model evaluation called with unusable inputs."""


class TrainingError(FedsimError, RuntimeError):
    """Local training diverged."""


class KernelError(FedsimError, RuntimeError):
    """Simulation kernel misuse or livelock guard tripped."""
