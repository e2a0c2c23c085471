from .errors import (
    ConfigError,
    CskError,
    DomainError,
    EigenError,
    GridError,
    LayoutError,
    SynthesisError,
    WiringError,
)
from .trace import SignalTrace, grid_length, resample, zero_like
from .types import (
    ChannelGeometry,
    ParticleCensus,
    PulseSpec,
    SpeciesId,
    SpeciesParams,
    Surface,
    species_name,
)
from .units import (
    concentration_to_count,
    count_to_concentration,
    parse_quantity,
    per_minute_to_per_second,
    per_second_to_per_minute,
)
