"""Immutable domain types shared by the analytic and stochastic engines."""

from dataclasses import dataclass, replace
from enum import Enum

from model.errors import DomainError


class SpeciesId(str, Enum):
    """Signalling molecules of the engineered-cell library."""

    ALPHA_CA = "aCa"
    ALPHA_SC = "aSc"
    DOX = "DOX"
    LACI = "Repressor-LacI"
    TETR = "Repressor-TetR"
    TETR_INDUCER = "Inducer-TetR"

    @classmethod
    def parse(cls, name: str):
        """Known names map onto the enum; anything else stays a user-defined string."""
        for member in cls:
            if name == member.value or name == member.name:
                return member
        aliases = {"αCa": cls.ALPHA_CA, "αSc": cls.ALPHA_SC, "R": cls.LACI}
        return aliases.get(name, name)


def species_name(species) -> str:
    return species.value if isinstance(species, SpeciesId) else str(species)


@dataclass(frozen=True)
class SpeciesParams:
    """
    Kinetic and transport constants of one molecule, canonical units.

    beta: nM/s, theta: 1/nM, n: dimensionless, k_d: 1/s,
    D: um^2/s, k_a: um/s.
    """

    name: str
    beta: float = 0.0
    theta: float = 1.0
    n: float = 1.0
    k_d: float = 0.0
    D: float = 0.0
    k_a: float = 0.0

    def __post_init__(self):
        for attr in ("beta", "theta", "n", "k_d", "D", "k_a"):
            if getattr(self, attr) < 0:
                raise DomainError(f"{self.name}: {attr} must be >= 0")
        if self.n <= 0:
            raise DomainError(f"{self.name}: Hill coefficient must be > 0")
        if self.beta > 0 and self.theta <= 0:
            raise DomainError(f"{self.name}: theta must be > 0 when beta > 0")

    def scaled(self, production_factor: float) -> "SpeciesParams":
        """Copy with beta multiplied, e.g. the forty-fold amplified QCSK circuits."""
        return replace(self, beta=self.beta * production_factor)


@dataclass(frozen=True)
class Surface:
    """A strip y_lo <= y <= y_hi spanning the full channel height."""

    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (0.0 <= self.y_lo <= self.y_hi):
            raise DomainError(f"invalid surface [{self.y_lo}, {self.y_hi}]")

    @property
    def width(self) -> float:
        return self.y_hi - self.y_lo

    def overlaps(self, other: "Surface") -> bool:
        return self.y_lo < other.y_hi and other.y_lo < self.y_hi

    def contains(self, other: "Surface") -> bool:
        return self.y_lo <= other.y_lo and other.y_hi <= self.y_hi

    def union(self, other: "Surface") -> "Surface":
        return Surface(min(self.y_lo, other.y_lo), max(self.y_hi, other.y_hi))

    def as_list(self):
        return [self.y_lo, self.y_hi]


@dataclass(frozen=True)
class ChannelGeometry:
    """
    Channel dimensions in um: station x-coordinates L, lane y-boundaries W,
    height H, cell radius R and flow speed u (um/s).

    slab_depth is the x-extent used when a lane region is turned into a volume
    for count <-> concentration conversion.
    """

    L: tuple
    W: tuple
    H: float
    R: float
    u: float = 0.0
    slab_depth: float = 1.0
    agent_radius: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "L", tuple(float(v) for v in self.L))
        object.__setattr__(self, "W", tuple(float(v) for v in self.W))
        if any(b <= a for a, b in zip(self.L, self.L[1:])):
            raise DomainError("station coordinates L must be strictly increasing")
        if not self.W or self.W[0] != 0.0:
            raise DomainError("lane boundaries W must start at 0")
        if any(b <= a for a, b in zip(self.W, self.W[1:])):
            raise DomainError("lane boundaries W must be strictly increasing")
        if self.H <= 0:
            raise DomainError("channel height H must be > 0")
        if self.R < 0:
            raise DomainError("cell radius R must be >= 0")
        if self.slab_depth <= 0 or self.agent_radius <= 0:
            raise DomainError("slab_depth and agent_radius must be > 0")

    @property
    def width(self) -> float:
        return self.W[-1]

    def lane(self, i: int, j: int) -> Surface:
        """The surface between lane boundaries W_i and W_j."""
        return Surface(self.W[i], self.W[j])

    def full_width(self) -> Surface:
        return Surface(0.0, self.width)

    def distance(self, i: int, j: int) -> float:
        """L_j - L_i."""
        return self.L[j] - self.L[i]

    def region_volume(self, surface: Surface) -> float:
        """Volume (um^3) of the slab in front of a surface."""
        return self.H * surface.width * self.slab_depth

    def with_width(self, width: float) -> "ChannelGeometry":
        """Copy whose lanes are cut at `width` (the single-lane BCSK channel)."""
        lanes = [w for w in self.W if w < width] + [width]
        return replace(self, W=tuple(lanes))

    def check_surface(self, surface: Surface):
        if surface.y_hi > self.width + 1e-12:
            raise DomainError(
                f"surface [{surface.y_lo}, {surface.y_hi}] exceeds channel width {self.width}"
            )


@dataclass(frozen=True)
class PulseSpec:
    """Rectangular bath of input molecules: amplitude (nM) held for duration (s) from start (s)."""

    amplitude: float
    duration: float
    start: float = 0.0
    release_rate: float = 1.0

    def __post_init__(self):
        if self.amplitude < 0 or self.duration < 0 or self.release_rate <= 0:
            raise DomainError("pulse amplitude/duration must be >= 0, release rate > 0")


@dataclass(frozen=True)
class ParticleCensus:
    """Integer accounting of one stochastic step."""

    alive: int = 0
    degraded: int = 0
    absorbed: int = 0
    emitted: int = 0

    def __add__(self, other):
        return ParticleCensus(
            self.alive + other.alive,
            self.degraded + other.degraded,
            self.absorbed + other.absorbed,
            self.emitted + other.emitted,
        )

