"""Particle filtering: islands, resampling, evidence, and summaries."""

import math

import numpy as np
import pytest

import oracles
from probsheet.errors import (
    AllZeroWeightsError,
    ConfigError,
    UnboundTargetError,
)
from probsheet.formula import CellRef
from probsheet.graph import compile_sheet, parse_sheet
from probsheet.smc import (
    ParticleStore,
    combined_log_evidence,
    island_sizes,
    particle_values,
    posterior_histogram,
    resample,
    run_island,
    run_smc,
)

A1 = CellRef.parse("A1")


def rng(seed=0):
    return np.random.default_rng(seed)


def compiled(texts):
    return compile_sheet(parse_sheet(texts))


CONJUGATE = {
    "A1": "=GAUSSIAN(0, 1)",
    "B1": "=ACTUAL(1, GAUSSIAN, A1, 1)",
}


# ---------------------------------------------------------------------------
# particle budget
# ---------------------------------------------------------------------------

def test_island_sizes_divide_evenly():
    assert island_sizes(5000, 10) == [500] * 10


def test_island_sizes_remainder_goes_last():
    assert island_sizes(5003, 10) == [500] * 9 + [503]
    assert island_sizes(7, 3) == [2, 2, 3]


@pytest.mark.parametrize("particles,islands", [(0, 1), (10, 0), (3, 5)])
def test_island_sizes_bad_budgets(particles, islands):
    with pytest.raises(ConfigError):
        island_sizes(particles, islands)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _store(weights):
    dbs = [{A1: float(i)} for i in range(len(weights))]
    return ParticleStore(dbs, np.asarray(weights, dtype=float))


def test_resample_preserves_total_weight():
    out = resample(_store([1.0, 2.0, 3.0, 2.0]), rng(1))
    assert out.weights.sum() == pytest.approx(8.0)
    assert np.all(out.weights == out.weights[0])
    assert len(out) == 4


def test_resample_follows_weights():
    # one particle holds nearly all the mass
    out = resample(_store([0.001] * 9 + [100.0]), rng(2))
    values = [db[A1] for db in out.databases]
    assert values.count(9.0) >= 8


def test_resample_copies_are_independent():
    out = resample(_store([0.0, 0.0, 5.0]), rng(3))
    out.databases[0][A1] = 999.0
    assert out.databases[1][A1] == 2.0


def test_resample_zero_weights():
    with pytest.raises(AllZeroWeightsError):
        resample(_store([0.0, 0.0]), rng(0))


def test_resample_unknown_scheme():
    with pytest.raises(ConfigError):
        resample(_store([1.0, 1.0]), rng(0), scheme="bogus")


@pytest.mark.parametrize("scheme", ["systematic", "stratified"])
def test_low_variance_schemes_run(scheme):
    out = resample(_store([1.0, 1.0, 6.0, 1.0]), rng(4), scheme=scheme)
    assert len(out) == 4
    values = [db[A1] for db in out.databases]
    assert values.count(2.0) >= 2


# ---------------------------------------------------------------------------
# one island
# ---------------------------------------------------------------------------

def test_island_matches_conjugate_posterior():
    c = compiled(CONJUGATE)
    store, evidence = run_island(c, 4000, rng=rng(10))
    post_mean, post_sd, z = oracles.conjugate_normal(1.0)
    xs = np.array([db[A1] for db in store.databases])
    assert xs.mean() == pytest.approx(post_mean, abs=0.05)
    assert xs.std() == pytest.approx(post_sd, abs=0.05)
    assert evidence == pytest.approx(z, rel=0.1)
    assert np.all(store.weights == evidence)


def test_island_with_no_observations_forward_simulates():
    c = compiled({"A1": "=GAUSSIAN(2, 0.5)", "B1": "=A1*2"})
    store, evidence = run_island(c, 3000, rng=rng(11))
    assert evidence == 1.0
    assert np.all(store.weights == 1.0)
    b = np.array([db[CellRef.parse("B1")] for db in store.databases])
    assert b.mean() == pytest.approx(4.0, abs=0.1)


def test_island_residual_cells_present_in_every_database():
    c = compiled({
        "A1": "=GAUSSIAN(0, 1)",
        "B1": "=ACTUAL(1, GAUSSIAN, A1, 1)",
        "C1": "=A1*10",
    })
    store, _ = run_island(c, 50, rng=rng(12))
    c1 = CellRef.parse("C1")
    for db in store.databases:
        assert db[c1] == pytest.approx(db[A1] * 10)


def test_island_impossible_observation():
    c = compiled({"A1": "=ACTUAL(5, BETWEEN, 0, 1)"})
    with pytest.raises(AllZeroWeightsError) as e:
        run_island(c, 20, rng=rng(0))
    assert "A1" in str(e.value)


def test_island_two_observations_sequential_update():
    c = compiled({
        "A1": "=GAUSSIAN(0, 1)",
        "B1": "=ACTUAL(1, GAUSSIAN, A1, 1)",
        "C1": "=ACTUAL(0.5, GAUSSIAN, A1, 1)",
    })
    store, evidence = run_island(c, 6000, rng=rng(13))
    m1, s1, z1 = oracles.conjugate_normal(1.0)
    # second reading updates the already-conditioned belief
    m2, s2, z2 = oracles.conjugate_normal(0.5, m1, s1, 1.0)
    xs = np.array([db[A1] for db in store.databases])
    assert xs.mean() == pytest.approx(m2, abs=0.05)
    assert xs.std() == pytest.approx(s2, abs=0.05)
    assert evidence == pytest.approx(z1 * z2, rel=0.15)


# ---------------------------------------------------------------------------
# island mixtures
# ---------------------------------------------------------------------------

def test_run_smc_weights_sum_to_one():
    mix = run_smc(compiled(CONJUGATE), particles=800, islands=4, seed=1)
    assert len(mix.islands) == 4
    assert sum(len(s) for s in mix.islands) == 800
    assert mix.weights.sum() == pytest.approx(1.0)


def test_run_smc_log_evidence_near_truth():
    mix = run_smc(compiled(CONJUGATE), particles=4000, islands=8, seed=2)
    _, _, z = oracles.conjugate_normal(1.0)
    assert combined_log_evidence(mix) == pytest.approx(math.log(z), abs=0.1)


def test_run_smc_is_deterministic_in_the_seed():
    a = run_smc(compiled(CONJUGATE), particles=400, islands=2, seed=9)
    b = run_smc(compiled(CONJUGATE), particles=400, islands=2, seed=9)
    va, wa = particle_values(a, A1)
    vb, wb = particle_values(b, A1)
    assert np.array_equal(va, vb) and np.array_equal(wa, wb)
    c = run_smc(compiled(CONJUGATE), particles=400, islands=2, seed=10)
    vc, _ = particle_values(c, A1)
    assert not np.array_equal(va, vc)


def test_particle_values_weights():
    mix = run_smc(compiled(CONJUGATE), particles=600, islands=3, seed=3)
    values, weights = particle_values(mix, A1)
    assert len(values) == 600
    assert weights.sum() == pytest.approx(1.0)


def test_particle_values_unknown_cell():
    mix = run_smc(compiled(CONJUGATE), particles=100, islands=1, seed=0)
    with pytest.raises(UnboundTargetError):
        particle_values(mix, CellRef.parse("Z9"))


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

def test_histogram_masses_and_moments():
    mix = run_smc(compiled(CONJUGATE), particles=4000, islands=4, seed=4)
    h = posterior_histogram(mix, A1, bins=30)
    assert len(h.edges) == 31 and len(h.masses) == 30
    assert sum(h.masses) == pytest.approx(1.0)
    post_mean, post_sd, _ = oracles.conjugate_normal(1.0)
    assert h.mean == pytest.approx(post_mean, abs=0.05)
    assert h.stddev == pytest.approx(post_sd, abs=0.05)


def test_histogram_of_constant_cell_widens_degenerate_range():
    c = compiled({
        "A1": "=GAUSSIAN(0, 1)",
        "B1": "=ACTUAL(1, GAUSSIAN, A1, 1)",
        "C1": "7",
    })
    mix = run_smc(c, particles=100, islands=1, seed=0)
    h = posterior_histogram(mix, CellRef.parse("C1"), bins=10)
    assert h.edges[0] == pytest.approx(6.5)
    assert h.edges[-1] == pytest.approx(7.5)
    assert h.mean == pytest.approx(7.0)
    assert h.stddev == pytest.approx(0.0, abs=1e-9)


def test_histogram_rejects_bad_bins():
    mix = run_smc(compiled(CONJUGATE), particles=100, islands=1, seed=0)
    with pytest.raises(ConfigError):
        posterior_histogram(mix, A1, bins=0)
