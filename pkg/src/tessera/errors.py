"""Exception hierarchy shared by every tessera module."""


class TesseraError(Exception):
    """Base class for all errors raised by tessera."""


class ConfigError(TesseraError, ValueError):
    """A parameter or configuration value is out of range or malformed."""


class ShapeError(TesseraError, ValueError):
    """Tensor shapes do not agree."""


class StepError(TesseraError, ValueError):
    """A diffusion step index lies outside the schedule."""


class CoverageError(ConfigError):
    """Some canvas pixel has no region (zero total weight)."""

    def __init__(self, pixel):
        self.pixel = tuple(int(i) for i in pixel)
        super().__init__(f"canvas pixel (row={self.pixel[0]}, col={self.pixel[1]}) is not covered by any region")


class AlignmentError(ConfigError):
    """A pixel index is not a multiple of the latent upscale factor."""


class PlacementError(ConfigError):
    """A region or guide placement falls outside the canvas."""
