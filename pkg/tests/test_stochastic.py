import math

import numpy as np
import pytest
from scipy.stats import chisquare

from blocks.kinetics import BlockKind, CellBlockConfig
from blocks.propagation import build_kernel
from engines.cascade import pulse_train
from engines import stochastic
from engines.stochastic import (
    CellAgent,
    Channel,
    CompartmentSpec,
    ParticleState,
    RunningMoments,
    StochasticModel,
    absorption_probability,
    calibrate_absorption,
    emit_particles,
    impulse_response,
    run_realization,
    run_realizations,
    step_agents,
    step_particles,
)
from model.errors import CskError
from model.trace import grid_length
from model.types import SpeciesParams, Surface
from model.units import concentration_to_count
from synthesis.layout import bcsk_layout


def particles_at(x, count, rng, width=15.0, height=3.0):
    pos = np.column_stack((np.full(count, x), rng.uniform(0, width, count), rng.uniform(0, height, count)))
    return ParticleState(pos)


def test_absorption_probability():
    assert absorption_probability(9.0, 89.0, 0.01) == pytest.approx(9.0 * math.sqrt(math.pi * 0.01 / 89.0))
    with pytest.raises(CskError):
        absorption_probability(9.0, 0.0, 0.01)
    strong = Channel(10.0, 15.0, 3.0, SpeciesParams("x", D=1.0, k_a=100.0))
    assert strong.p_absorb(1.0) == 1.0


def test_particles_without_diffusion_stay_put():
    rng = np.random.default_rng(1)
    channel = Channel(math.inf, 15.0, 3.0, SpeciesParams("still"))
    state = particles_at(5.0, 100, rng)
    moved, census, absorbed = step_particles(state, channel, 0.1, rng)
    np.testing.assert_array_equal(moved.positions, state.positions)
    assert census.alive == 100 and census.degraded == 0 and absorbed.size == 0


def test_survival_follows_first_order_decay():
    rng = np.random.default_rng(2)
    channel = Channel(math.inf, 15.0, 3.0, SpeciesParams("decay", k_d=0.5, D=1.0))
    state = particles_at(50.0, 20000, rng)
    for _ in range(20):
        state, _, _ = step_particles(state, channel, 0.1, rng)
    assert len(state) / 20000 == pytest.approx(math.exp(-1.0), abs=0.02)


def test_drift_moves_the_mean():
    rng = np.random.default_rng(3)
    channel = Channel(math.inf, 15.0, 3.0, SpeciesParams("drift", D=1.0), u=2.0)
    state = particles_at(50.0, 10000, rng)
    for _ in range(10):
        state, _, _ = step_particles(state, channel, 0.1, rng)
    assert state.positions[:, 0].mean() == pytest.approx(52.0, abs=0.1)


def test_walls_are_respected():
    rng = np.random.default_rng(4)
    channel = Channel(math.inf, 5.0, 3.0, SpeciesParams("box", D=89.0))
    state = particles_at(0.0, 5000, rng, width=5.0)
    for _ in range(50):
        state, _, _ = step_particles(state, channel, 0.05, rng)
        pos = state.positions
        assert pos[:, 0].min() >= 0.0
        assert 0.0 <= pos[:, 1].min() and pos[:, 1].max() <= 5.0
        assert 0.0 <= pos[:, 2].min() and pos[:, 2].max() <= 3.0


def test_step_census_is_exact():
    rng = np.random.default_rng(5)
    channel = Channel(2.0, 15.0, 3.0, SpeciesParams("dox", k_d=0.2, D=89.0, k_a=9.0))
    state = particles_at(1.5, 3000, rng)
    total = len(state)
    for _ in range(20):
        before = len(state)
        state, census, absorbed = step_particles(state, channel, 0.01, rng)
        assert census.alive + census.degraded + census.absorbed == before
        assert absorbed.size == census.absorbed
        assert len(state) == census.alive
        total -= census.degraded + census.absorbed
    assert len(state) == total


def test_emitted_particles_start_on_the_strip():
    rng = np.random.default_rng(6)
    pos = emit_particles(500, Surface(10.0, 15.0), 3.0, rng)
    assert not np.any(pos[:, 0])
    assert pos[:, 1].min() >= 10.0 and pos[:, 1].max() <= 15.0


def test_absorbed_particles_are_credited_by_strip(species):
    spec = CompartmentSpec(
        "S0",
        10.0,
        Channel(10.0, 15.0, 3.0, species["DOX"]),
        edges=np.array([0.0, 5.0, 10.0, 15.0]),
        owners=np.array([0, -1, 1]),
    )
    credited = spec.credit(np.array([1.0, 6.0, 11.0, 14.0]), 2)
    assert credited.tolist() == [1, 2]


def test_agents_turn_release_into_whole_particles(species):
    cfg = CellBlockConfig(BlockKind.NOT, species["DOX"], species["aSc"], repressor=species["Repressor-LacI"])
    agents = [CellAgent("a", Surface(0.0, 5.0), 1000.0, cfg), CellAgent("b", Surface(5.0, 10.0), 1000.0, cfg)]
    total = 0
    for _ in range(600):
        counts = step_agents(agents, np.zeros(2, dtype=int), 1.0)
        assert counts[0] == counts[1] >= 0
        total += counts[0]
    assert total > 0
    assert 0.0 <= agents[0].residual < 1.0
    step_agents(agents, np.array([30, 0]), 1.0)
    assert agents[0].absorbed == 0
    assert agents[0].state.c_iin > agents[1].state.c_iin


def test_lumped_agents_cover_the_whole_lane(species, geometry):
    layout = bcsk_layout(geometry)
    model = StochasticModel(layout, species, 1.0, 10.0, {}, substeps=1, lumped_agents=True)
    strips = [c.strip for c in model.collectors if c.population == "tx0"]
    assert strips == [layout.populations["tx0"].lane]


@pytest.fixture(scope="module")
def small_model(species, geometry):
    layout = bcsk_layout(geometry)
    ts, horizon = 1.0, 20.0
    n = grid_length(horizon, ts)
    inputs = {0: pulse_train([1], 0, 1.0, 2.0, horizon, n, ts)}
    return StochasticModel(layout, species, ts, horizon, inputs, substeps=4)


def test_same_seed_same_realization(small_model):
    a = run_realization(small_model, 7)
    b = run_realization(small_model, 7)
    for bit in a.sinks:
        np.testing.assert_array_equal(a.sinks[bit], b.sinks[bit])
    for name in a.released:
        np.testing.assert_array_equal(a.released[name], b.released[name])
    assert a.census == b.census


def test_realization_census_and_source_release(small_model):
    record = run_realization(small_model, 11)
    census = record.census
    assert census.alive == census.emitted - census.degraded - census.absorbed
    source = small_model.layout.sources[0]
    volume = small_model.layout.geometry.region_volume(source.lane)
    expected = concentration_to_count(small_model.doses["S0"].sum(), volume)
    assert abs(record.released["S0"].sum() - expected) < 1.0


def test_worker_count_does_not_change_the_result(small_model):
    serial = run_realizations(small_model, 4, seed=2024, max_workers=1)
    threaded = run_realizations(small_model, 4, seed=2024, max_workers=2)
    np.testing.assert_array_equal(serial.sink_mean[0], threaded.sink_mean[0])
    np.testing.assert_array_equal(serial.released_mean["tx0"], threaded.released_mean["tx0"])
    assert serial.realizations == 4
    assert len(serial.sink_trace(0)) == small_model.n


def test_agents_tile_the_lane(small_model):
    strips = [c.strip for c in small_model.collectors if c.population == "tx0"]
    assert len(strips) == 5
    assert sum(s.width for s in strips) == pytest.approx(5.0)


def test_substeps_must_be_positive(species, geometry):
    with pytest.raises(CskError):
        StochasticModel(bcsk_layout(geometry), species, 1.0, 10.0, {}, substeps=0)


def test_impulse_response_columns_start_at_zero(species, geometry):
    rng = np.random.default_rng(8)
    channel = Channel(1.0, geometry.width, geometry.H, species["DOX"], geometry.u)
    counts = impulse_response(channel, Surface(0.0, 5.0), [Surface(0.0, 5.0), Surface(10.0, 15.0)], 400, 0.1, 50, rng)
    assert counts.shape == (2, 51)
    assert not np.any(counts[:, 0])
    assert counts.sum() <= 400


@pytest.mark.slow
def test_absorbed_total_matches_the_kernel(species, geometry):
    full = geometry.full_width()
    kernel = build_kernel(10.0, full, full, species["DOX"], geometry, 60.0, 0.01)
    report = calibrate_absorption(kernel, 2000, seed=2024, substeps=4)
    assert abs(report["relative_error"]) < 0.05
    assert report["p_absorb"] < 1.0


def test_lost_particle_is_caught_at_its_step(small_model, monkeypatch):
    def leaky(count, strip, height, rng):
        pos = emit_particles(count, strip, height, rng)
        return pos[1:] if count else pos

    monkeypatch.setattr(stochastic, "emit_particles", leaky)
    with pytest.raises(CskError, match="census broken at step 0"):
        run_realization(small_model, 3)


def test_absorbed_particles_are_uniform_across_the_width(species, geometry):
    rng = np.random.default_rng(12)
    channel = Channel(2.0, geometry.width, geometry.H, species["DOX"], geometry.u)
    state = ParticleState(emit_particles(20000, geometry.full_width(), geometry.H, rng))
    absorbed = []
    for _ in range(200):
        state, _, ys = step_particles(state, channel, 0.01, rng)
        absorbed.append(ys)
    ys = np.concatenate(absorbed)
    assert ys.size > 5000
    observed, _ = np.histogram(ys, bins=10, range=(0.0, geometry.width))
    assert chisquare(observed).pvalue > 1e-3


def test_standard_error_shrinks_with_the_square_root_of_realizations():
    rng = np.random.default_rng(13)
    sigma = 2.0
    scaled = {}
    for n in (16, 64, 256):
        moments = RunningMoments()
        for _ in range(n):
            moments.add({"y": rng.normal(5.0, sigma, 4000)})
        moments.count = n
        stderr = moments.stderr()["y"]
        assert moments.mean()["y"].mean() == pytest.approx(5.0, abs=0.05)
        scaled[n] = stderr.mean() * math.sqrt(n)
    for n, value in scaled.items():
        assert value == pytest.approx(sigma, rel=0.05), n
    assert scaled[16] / scaled[256] == pytest.approx(1.0, rel=0.05)


def test_single_realization_has_no_spread():
    moments = RunningMoments()
    moments.add({"y": np.arange(5)})
    moments.count = 1
    assert not moments.stderr()["y"].any()
