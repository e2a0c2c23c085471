"""
Advection-diffusion-reaction channel between two cell columns.

The kernel h2 is the concentration integrated over the absorbing surface at
distance L, per unit released from the emitting surface at x = 0, for a channel
reflective at x = 0 and on the lane walls and partially absorbing (rate k_a)
at x = L. It factors into an axial series over the roots of
lambda * tan(lambda L) = k_a / D and a lateral cosine series over
gamma_i = i pi / W; the propagation operator convolves a released trace with it.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from model.errors import DomainError, EigenError, GridError
from model.trace import SignalTrace, clamp_nonnegative, grid_length
from model.types import ChannelGeometry, SpeciesParams, Surface
from utils import utils

RELATIVE_CUTOFF = 1e-12
MAX_AXIAL_TERMS = 2000
MAX_LATERAL_TERMS = 2000
CHUNK = 8192
# finest time step h2 is evaluated on; coarser grids average sub-samples
RESOLUTION = 0.01
CACHE_VERSION = 1

_BISECTION_STEPS = 60
_NEWTON_STEPS = 3


def solve_eigen_phases(L: float, G1: float, count: int) -> np.ndarray:
    """
    Phases delta_l in [0, pi/2) with lambda_l = ((l - 1) pi + delta_l) / L.

    Solves ((l-1) pi + delta) sin(delta) - G1 L cos(delta) = 0, which is monotone
    in delta on the bracket, by vectorized bisection followed by Newton steps.
    """
    if not L > 0 or G1 < 0 or count < 1:
        raise DomainError(f"need L > 0, G1 >= 0 and count >= 1 (got {L}, {G1}, {count})")
    a = np.pi * np.arange(count, dtype=float)
    g = G1 * L
    if g == 0.0:
        return np.zeros(count)

    def h(delta):
        return (a + delta) * np.sin(delta) - g * np.cos(delta)

    lo = np.zeros(count)
    hi = np.full(count, np.pi / 2)
    if np.any(h(lo) > 0) or np.any(h(hi) < 0):
        raise EigenError(f"cannot bracket eigenvalues for L={L}, G1={G1}")
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = h(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    delta = 0.5 * (lo + hi)
    for _ in range(_NEWTON_STEPS):
        slope = np.sin(delta) * (1.0 + g) + (a + delta) * np.cos(delta)
        step = h(delta) / slope
        delta = np.clip(delta - step, lo, hi)
    return delta


def eigenvalues_from_phases(L: float, phases: np.ndarray) -> np.ndarray:
    return (np.pi * np.arange(phases.size) + phases) / L


def solve_eigenvalues(L: float, G1: float, count: int) -> np.ndarray:
    """The first `count` positive roots of lambda * tan(lambda L) = G1 (1/um)."""
    return eigenvalues_from_phases(L, solve_eigen_phases(L, G1, count))


def eigen_residuals(L: float, G1: float, phases: np.ndarray) -> np.ndarray:
    """lambda * tan(lambda L) - G1 evaluated through the phases, so it keeps full precision."""
    return eigenvalues_from_phases(L, phases) * np.tan(phases) - G1


def lateral_modes(width: float, count: int) -> np.ndarray:
    return np.pi * np.arange(1, count + 1) / width


def lateral_coefficients(emit: Surface, absorb: Surface, gammas: np.ndarray) -> np.ndarray:
    """(sin g y02 - sin g y01)(sin g y2 - sin g y1) / g^2 for every mode g."""
    s_emit = np.sin(gammas * emit.y_hi) - np.sin(gammas * emit.y_lo)
    s_abs = np.sin(gammas * absorb.y_hi) - np.sin(gammas * absorb.y_lo)
    return s_emit * s_abs / gammas**2


def _axial_count(L, D, ts, first_envelope, rel_tol, cap):
    """Smallest term count whose next envelope (1/L) exp(-lambda_min^2 D ts) is negligible."""
    l = np.arange(cap + 1)
    bound = np.exp(-((l * np.pi / L) ** 2) * D * ts) / L
    small = np.nonzero(bound < rel_tol * first_envelope)[0]
    if small.size == 0:
        utils.log(
            f"axial series capped at {cap} terms (L={L} um, ts={ts} s)",
            when="kernel",
            severity="WARNING",
        )
        return cap
    return max(int(small[0]), 1)


def _lateral_count(width, D, ts, reference, rel_tol, cap):
    gammas = lateral_modes(width, cap)
    bound = 4.0 / gammas**2 * np.exp(-(gammas**2) * D * ts)
    small = np.nonzero(bound < rel_tol * reference)[0]
    if small.size == 0:
        utils.log(
            f"lateral series capped at {cap} terms (W={width} um, ts={ts} s)",
            when="kernel",
            severity="WARNING",
        )
        return cap
    return int(small[0])


@dataclass(frozen=True)
class PropagationKernel:
    """
    Tabulated h2 on the ts grid; samples[0] = 0 and samples beyond
    `truncation` are negligible when `converged` is set.
    """

    distance: float
    emit: Surface
    absorb: Surface
    species: SpeciesParams
    geometry: ChannelGeometry
    ts: float
    phases: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    gammas: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    converged: bool = True

    @property
    def truncation(self) -> int:
        return self.samples.size

    @property
    def prefactor(self) -> float:
        """k_a ts / (H (y2 - y1)); zero for a zero-width absorbing surface."""
        if self.absorb.width == 0:
            return 0.0
        return self.species.k_a * self.ts / (self.geometry.H * self.absorb.width)

    def cache_key(self) -> str:
        return kernel_key(self.distance, self.emit, self.absorb, self.species, self.geometry, self.ts)


def kernel_key(L, emit, absorb, species, geometry, ts, horizon=None, **options) -> str:
    return utils.calculate_key_hash(
        {
            "version": CACHE_VERSION,
            "L": L,
            "emit": emit.as_list(),
            "absorb": absorb.as_list(),
            "species": [species.name, species.k_d, species.D, species.k_a],
            "W": geometry.width,
            "H": geometry.H,
            "u": geometry.u,
            "ts": ts,
            "horizon": horizon,
            "options": options,
        }
    )


def _axial_terms(lambdas, G1, L):
    q = lambdas**2 + G1**2
    denom = L * q + G1
    # without absorption the first mode is the constant one, norm L
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, q * np.cos(lambdas * L) / denom, 0.5 / L)


def build_kernel(
    L: float,
    emit: Surface,
    absorb: Surface,
    species: SpeciesParams,
    geometry: ChannelGeometry,
    horizon: float,
    ts: float,
    rel_tol: float = RELATIVE_CUTOFF,
    max_axial: int = MAX_AXIAL_TERMS,
    max_lateral: int = MAX_LATERAL_TERMS,
    term_scale: float = 1.0,
    resolution: float = RESOLUTION,
) -> PropagationKernel:
    """
    Tabulate h2(t | L, emit, absorb) at t = k ts for k < horizon / ts.

    Args:
        term_scale (float): Multiplies both truncation counts (used to check
            truncation stability).
        resolution (float): Largest spacing between evaluation points inside
            one interval; samples are interval averages when ts is coarser.

    Returns:
        PropagationKernel: Samples cut where the envelope of h2 has fallen below
        rel_tol of its peak.
    """
    if not L > 0:
        raise DomainError(f"propagation distance must be positive, got {L}")
    if species.D <= 0:
        raise DomainError(f"{species.name}: diffusion coefficient must be > 0")
    geometry.check_surface(emit)
    geometry.check_surface(absorb)
    n = grid_length(horizon, ts)
    D, u, kd = species.D, geometry.u, species.k_d
    W, H = geometry.width, geometry.H
    G1 = species.k_a / D
    sub = max(1, int(math.ceil(ts / resolution - 1e-9)))
    # truncation is judged at the earliest evaluated time, where the series converge slowest
    t_min = ts / sub

    first = solve_eigen_phases(L, G1, 1)
    lam1 = eigenvalues_from_phases(L, first)
    first_env = abs(_axial_terms(lam1, G1, L)[0]) * math.exp(-(lam1[0] ** 2) * D * t_min)
    n_axial = min(int(math.ceil(_axial_count(L, D, t_min, first_env, rel_tol, max_axial) * term_scale)), max_axial)
    phases = solve_eigen_phases(L, G1, n_axial)
    lambdas = eigenvalues_from_phases(L, phases)
    residual = np.max(np.abs(eigen_residuals(L, G1, phases)))
    if residual > 1e-10:
        raise EigenError(f"eigenvalue residual {residual:.2e} above 1e-10 (L={L}, G1={G1})")
    axial = _axial_terms(lambdas, G1, L)

    base = emit.width * absorb.width
    n_lateral = min(
        int(math.ceil(_lateral_count(W, D, t_min, max(base, 1e-6 * W**2), rel_tol, max_lateral) * term_scale)),
        max_lateral,
    )
    gammas = lateral_modes(W, n_lateral)
    lateral = lateral_coefficients(emit, absorb, gammas)

    if absorb.width == 0 or emit.width == 0 or n < 2:
        return PropagationKernel(L, emit, absorb, species, geometry, ts, phases, lambdas, gammas, np.zeros(max(n, 1)))

    bound_axial = np.abs(axial)
    bound_lateral = base + 2.0 * np.abs(lateral).sum()
    rows = max(1, CHUNK // sub)
    offsets = (np.arange(sub) + 1.0) / sub - 1.0

    def h2(t):
        shared = u * (2.0 * L - u * t) / (4.0 * D) - kd * t
        x_part = np.exp(shared[:, None] - np.outer(D * t, lambdas**2)) @ axial
        y_part = base + 2.0 * (np.exp(-np.outer(D * t, gammas**2)) @ lateral)
        return 2.0 * H / W * x_part * y_part

    chunks = [np.zeros(1)]
    peak = 0.0
    converged = False
    start = 1
    while start < n:
        stop = min(start + rows, n)
        # right-point average over ((k-1) ts, k ts]; a single point k ts when sub = 1
        t = (ts * (np.arange(start, stop)[:, None] + offsets[None, :])).ravel()
        chunk = h2(t).reshape(stop - start, sub).mean(axis=1)
        chunks.append(chunk)
        peak = max(peak, float(np.max(np.abs(chunk))))
        t_end = ts * (stop - 1)
        envelope = (
            2.0 * H / W
            * float(np.exp(u * (2.0 * L - u * t_end) / (4.0 * D) - kd * t_end - D * t_end * lambdas**2) @ bound_axial)
            * bound_lateral
        )
        start = stop
        # the envelope bounds every later sample too, since it only decreases in t
        if envelope == 0.0 or (peak > 0 and envelope < rel_tol * peak):
            converged = True
            break
    samples = clamp_nonnegative(np.concatenate(chunks), what=f"in kernel L={L}")
    if converged:
        above = np.nonzero(samples > rel_tol * samples.max(initial=0.0))[0]
        samples = samples[: int(above[-1]) + 2] if above.size else samples[:1]
    return PropagationKernel(
        L, emit, absorb, species, geometry, ts, phases, lambdas, gammas, samples, converged
    )


def propagate(signal: SignalTrace, kernel: PropagationKernel) -> SignalTrace:
    """
    Concentration absorbed by the kernel's surface per interval:
    k_a ts / (H (y2 - y1)) * (signal * h2), causal and clamped at zero.
    """
    if not math.isclose(signal.ts, kernel.ts, rel_tol=1e-12):
        raise GridError(f"trace step {signal.ts} s does not match kernel step {kernel.ts} s")
    n = len(signal)
    if not kernel.converged and kernel.truncation < n:
        raise GridError(f"kernel covers {kernel.truncation} samples, trace needs {n}")
    if kernel.prefactor == 0.0 or n == 0:
        return signal.with_values(np.zeros(n))
    out = fftconvolve(signal.values, kernel.samples)[:n] * kernel.prefactor
    return signal.with_values(clamp_nonnegative(out, tolerance=1e-9 * max(out.max(initial=0.0), 1e-300)))


class KernelCache:
    """
    Kernels stored as .npz files named by the hash of their parameters.

    Each file carries the cache version; files written by another version are
    rebuilt.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        self._memory = {}
        self.keys = []

    def get(self, L, emit, absorb, species, geometry, horizon, ts, **options) -> PropagationKernel:
        key = kernel_key(L, emit, absorb, species, geometry, ts, horizon, **options)
        if key not in self.keys:
            self.keys.append(key)
        if key in self._memory:
            return self._memory[key]
        kernel = self._load(key, L, emit, absorb, species, geometry, ts)
        if kernel is None:
            kernel = build_kernel(L, emit, absorb, species, geometry, horizon, ts, **options)
            self._store(key, kernel)
        self._memory[key] = kernel
        return kernel

    def _path(self, key):
        return self.directory / f"kernel_{key}.npz"

    def _load(self, key, L, emit, absorb, species, geometry, ts):
        if self.directory is None or not self._path(key).is_file():
            return None
        try:
            with np.load(self._path(key)) as data:
                if int(data["version"]) != CACHE_VERSION:
                    utils.log(f"stale kernel cache entry {key}, rebuilding", when="kernel", severity="DEBUG")
                    return None
                return PropagationKernel(
                    L,
                    emit,
                    absorb,
                    species,
                    geometry,
                    ts,
                    data["phases"],
                    data["eigenvalues"],
                    data["gammas"],
                    data["samples"],
                    bool(data["converged"]),
                )
        except (OSError, KeyError, ValueError) as e:
            utils.log(f"unreadable kernel cache entry {key}: {e}", when="kernel", severity="WARNING")
            return None

    def _store(self, key, kernel):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        np.savez(
            self._path(key),
            version=CACHE_VERSION,
            phases=kernel.phases,
            eigenvalues=kernel.eigenvalues,
            gammas=kernel.gammas,
            samples=kernel.samples,
            converged=kernel.converged,
        )
