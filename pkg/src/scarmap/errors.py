"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4. Plain ValueError/TypeError are reserved for API misuse
(wrong shapes or argument types) and are not caught by the CLI.
"""


class ScarmapError(Exception):
    """Base class for all scarmap-specific failures."""


class ConfigError(ScarmapError):
    """Invalid configuration: bad field values, unknown keys, unusable specs."""


class DataError(ScarmapError):
    """Invalid or inconsistent data: files, headers, masks, degenerate inputs."""


class DivergenceError(ScarmapError):
    """Training produced a non-finite loss."""


class DegenerateBandError(DataError):
    """A band has zero value range and cannot be rescaled."""


class DegenerateMapError(DataError):
    """A score map is constant and cannot be thresholded automatically."""


class MissingBandError(DataError):
    """A required band role is absent from the raster."""
