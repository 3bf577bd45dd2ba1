"""thermosa: simulate thermal aerial imaging of ground hotspots under forest
canopy, suppress occlusion with synthetic-aperture integration, correct the
residual thermal bias, and score the recovered surface temperatures."""

from .errors import (
    BackendError,
    CapabilityError,
    EmptySelectionError,
    FormatError,
    ParameterError,
    ThermosaError,
)
from .raster import (
    FIRE_REGIME,
    FULL_REGIME,
    RegimeMask,
    TemperatureRaster,
    raster_stats,
    read_raster,
    resample_bilinear,
    write_raster,
)

__version__ = "0.1.0"
