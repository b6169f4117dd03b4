"""Exception hierarchy shared by the library and the CLI."""


class ConfigError(ValueError):
    """Invalid user-supplied configuration."""


class NumericalError(RuntimeError):
    """A numerical routine failed to meet its tolerance."""


class QuadratureError(NumericalError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


class PropagationError(NumericalError):
    """Raised when the integrator fails or the state becomes non-finite."""


class DimensionError(ConfigError):
    """Tensor-product dimension exceeds the configured cap."""


class UnphysicalBathError(ConfigError):
    """Bath parameters outside the supported regime (e.g. overdamped)."""
