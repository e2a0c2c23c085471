import math
from dataclasses import replace

import numpy as np
import pytest

from blocks.propagation import (
    KernelCache,
    build_kernel,
    eigen_residuals,
    propagate,
    solve_eigen_phases,
    solve_eigenvalues,
)
from model.errors import DomainError, GridError
from model.trace import SignalTrace
from model.types import Surface


def absorbed_fraction(kernel):
    """Share of an impulse released from the emit strip that the absorbing strip takes up."""
    return kernel.species.k_a * kernel.ts * kernel.samples.sum() / (kernel.geometry.H * kernel.emit.width)


@pytest.mark.parametrize(
    "L, G1", [(1.0, 9 / 89), (3.0, 9 / 89), (10.0, 9 / 89), (35.0, 9 / 89), (46.0, 9 / 89), (4.0, 50.0), (46.0, 0.001)]
)
def test_eigen_residuals_are_tiny(L, G1):
    phases = solve_eigen_phases(L, G1, 500)
    assert np.max(np.abs(eigen_residuals(L, G1, phases))) < 1e-10
    lambdas = solve_eigenvalues(L, G1, 500)
    assert np.all(np.diff(lambdas) > 0)
    branch = np.pi * np.arange(500) / L
    assert np.all(lambdas > branch) and np.all(lambdas < branch + np.pi / (2 * L))


def test_eigenvalues_without_absorption():
    phases = solve_eigen_phases(10.0, 0.0, 5)
    assert not np.any(phases)
    phases = solve_eigen_phases(10.0, 1e-9, 5)
    assert np.all(phases < 1e-3)


def test_eigenvalues_for_strong_absorption():
    phases = solve_eigen_phases(10.0, 1e9, 5)
    assert np.all(np.abs(phases - math.pi / 2) < 1e-6)


def test_eigen_domain():
    with pytest.raises(DomainError):
        solve_eigen_phases(0.0, 1.0, 3)


def test_full_width_kernel_absorbs_nearly_everything(species, geometry):
    still = replace(geometry, u=0.0)
    full = still.full_width()
    kernel = build_kernel(10.0, full, full, species["DOX"], still, 60.0, 0.01)
    assert kernel.converged
    assert kernel.samples[0] == 0.0
    assert 0.95 <= absorbed_fraction(kernel) < 1.0


def test_degradation_lowers_the_kernel(species, geometry):
    full = geometry.full_width()
    dox = species["DOX"]
    slow = build_kernel(10.0, full, full, dox, geometry, 20.0, 0.01)
    fast = build_kernel(10.0, full, full, replace(dox, k_d=0.5), geometry, 20.0, 0.01)
    n = min(slow.truncation, fast.truncation)
    assert np.all(fast.samples[1:n] <= slow.samples[1:n] + 1e-12 * slow.samples.max())
    assert fast.samples.sum() < slow.samples.sum()


@pytest.mark.parametrize("absorb", [Surface(0.0, 1.25), Surface(5.0, 10.0), Surface(13.75, 15.0)])
def test_partial_surfaces_never_absorb_more_than_released(species, geometry, absorb):
    still = replace(geometry, u=0.0)
    kernel = build_kernel(10.0, Surface(0.0, 5.0), absorb, species["DOX"], still, 60.0, 0.01)
    assert 0.0 < absorbed_fraction(kernel) <= 1.0


def test_far_surface_peaks_later_and_lower(species, geometry):
    emit = Surface(0.0, 5.0)
    near = build_kernel(10.0, emit, Surface(0.0, 1.25), species["DOX"], geometry, 30.0, 0.01)
    far = build_kernel(10.0, emit, Surface(13.75, 15.0), species["DOX"], geometry, 30.0, 0.01)
    assert np.argmax(far.samples) > np.argmax(near.samples)
    assert far.samples.max() < near.samples.max()


def test_longer_distance_arrives_later(species, geometry):
    full = geometry.full_width()
    short = build_kernel(4.0, full, full, species["aCa"], geometry, 120.0, 0.1)
    long = build_kernel(35.0, full, full, species["aCa"], geometry, 120.0, 0.1)
    assert np.argmax(long.samples) > np.argmax(short.samples)


def test_zero_width_surface_gives_zero_kernel(species, geometry):
    kernel = build_kernel(10.0, Surface(0.0, 5.0), Surface(3.0, 3.0), species["DOX"], geometry, 10.0, 0.1)
    assert not np.any(kernel.samples)
    out = propagate(SignalTrace(np.ones(100), 0.1), kernel)
    assert not np.any(out.values)


def test_more_terms_do_not_change_the_kernel(species, geometry):
    emit, absorb = Surface(0.0, 5.0), Surface(10.0, 15.0)
    base = build_kernel(10.0, emit, absorb, species["DOX"], geometry, 20.0, 0.01)
    finer = build_kernel(10.0, emit, absorb, species["DOX"], geometry, 20.0, 0.01, term_scale=2.0)
    n = min(base.truncation, finer.truncation)
    np.testing.assert_allclose(base.samples[:n], finer.samples[:n], rtol=1e-6, atol=1e-12 * base.samples.max())


def test_propagate_is_linear_and_causal(species, geometry):
    full = geometry.full_width()
    kernel = build_kernel(4.0, full, full, species["aCa"], geometry, 60.0, 0.1)
    dose = np.zeros(600)
    dose[100] = 2.0
    out = propagate(SignalTrace(dose, 0.1), kernel).values
    assert not np.any(out[:101])
    double = propagate(SignalTrace(2 * dose, 0.1), kernel).values
    np.testing.assert_allclose(double, 2 * out, rtol=1e-9, atol=1e-15)


def test_propagate_needs_matching_step(species, geometry):
    full = geometry.full_width()
    kernel = build_kernel(4.0, full, full, species["aCa"], geometry, 10.0, 0.1)
    with pytest.raises(GridError):
        propagate(SignalTrace(np.ones(10), 1.0), kernel)


def test_distance_must_be_positive(species, geometry):
    full = geometry.full_width()
    with pytest.raises(DomainError):
        build_kernel(0.0, full, full, species["aCa"], geometry, 10.0, 0.1)


def test_cache_round_trip(tmp_path, species, geometry):
    full = geometry.full_width()
    args = (4.0, full, full, species["aCa"], geometry, 30.0, 0.1)
    first = KernelCache(tmp_path).get(*args)
    assert len(list(tmp_path.glob("kernel_*.npz"))) == 1
    cache = KernelCache(tmp_path)
    again = cache.get(*args)
    np.testing.assert_array_equal(first.samples, again.samples)
    assert cache.get(*args) is again
