import numpy as np
import pytest

from inhomdiff.exceptions import ScheduleMismatch
from inhomdiff.model import DiffusionProfile, GaussianWavepacket, HarmonicPotential
from inhomdiff.observables import ObservableSeries, moment_series
from inhomdiff.pde import SolverConfig, evolve
from inhomdiff.sde import EnsembleConfig, compare_with_pde, restrict_to, simulate_ensemble

from conftest import ou_mean


def _pde_moments(grid, alpha, k, eps0, t_end, times):
    evo = evolve(GaussianWavepacket(eps0), DiffusionProfile(1.0, alpha), HarmonicPotential(k), grid, SolverConfig(t_end=t_end))
    return {n: restrict_to(moment_series(evo, n), times) for n in (1, 2)}


def test_ou_mean_at_unit_time():
    cfg = EnsembleConfig(n_traj=100_000, t_end=1.0, record_times=(0.5, 1.0))
    mc = simulate_ensemble(DiffusionProfile(1.0, 0.0), HarmonicPotential(1.0), GaussianWavepacket(1.0), cfg)
    i = 1
    assert mc.times[i] == 1.0
    assert abs(mc.mean[0, i] - np.exp(-1.0)) <= 3 * mc.stderr[0, i]
    assert np.all(mc.stderr > 0)


def test_ou_second_moment_equilibrates():
    cfg = EnsembleConfig(n_traj=50_000, t_end=6.0, record_times=(6.0,))
    mc = simulate_ensemble(DiffusionProfile(1.0, 0.0), HarmonicPotential(1.0), GaussianWavepacket(1.0), cfg)
    assert abs(mc.mean[1, 0] - 1.0) <= 3 * mc.stderr[1, 0]


def test_ensemble_mean_rises_in_nonmonotonic_phase():
    cfg = EnsembleConfig(n_traj=100_000, t_end=0.5, record_times=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5))
    mc = simulate_ensemble(DiffusionProfile(1.0, 0.25), HarmonicPotential(0.25), GaussianWavepacket(0.5), cfg)
    rise = mc.mean[0] - 0.5
    # at least one early record point sits above eps0 by more than 3 standard errors
    assert np.any(rise[1:] > 3 * mc.stderr[0, 1:])


def test_tail_mass_reported():
    cfg = EnsembleConfig(n_traj=4096, t_end=1.0, record_times=(1.0,))
    mc = simulate_ensemble(DiffusionProfile(1.0, 0.0), HarmonicPotential(1.0), GaussianWavepacket(1.0), cfg, tail_edge=1.0)
    assert 0.2 < mc.tail_mass[0] < 0.6
    assert mc.n_traj == 4096


def test_estimates_flatten_orders_and_times():
    cfg = EnsembleConfig(n_traj=100, t_end=0.2, record_times=(0.1, 0.2), block_size=32)
    mc = simulate_ensemble(DiffusionProfile(), HarmonicPotential(), GaussianWavepacket(1.0), cfg)
    est = mc.estimates()
    assert [(e.order, e.time) for e in est] == [(1, 0.1), (1, 0.2), (2, 0.1), (2, 0.2)]
    assert all(e.stderr > 0 for e in est)


# -- determinism ------------------------------------------------------------------


def test_seed_determinism_across_layouts():
    cfg = EnsembleConfig(n_traj=20_000, t_end=0.5, record_times=(0.25, 0.5), block_size=4096)
    args = (DiffusionProfile(1.0, 1.0), HarmonicPotential(1.0), GaussianWavepacket(0.5), cfg)
    a = simulate_ensemble(*args, workers=1)
    b = simulate_ensemble(*args, workers=2)
    c = simulate_ensemble(*args, workers=1)
    assert a.mean.tobytes() == b.mean.tobytes() == c.mean.tobytes()
    assert a.stderr.tobytes() == b.stderr.tobytes()


def test_different_seed_differs():
    base = dict(n_traj=2000, t_end=0.2, record_times=(0.2,))
    args = (DiffusionProfile(), HarmonicPotential(), GaussianWavepacket(1.0))
    a = simulate_ensemble(*args, EnsembleConfig(seed=1, **base))
    b = simulate_ensemble(*args, EnsembleConfig(seed=2, **base))
    assert a.mean[0, 0] != b.mean[0, 0]


def test_record_times_must_be_on_step_grid():
    with pytest.raises(ValueError):
        EnsembleConfig(dt_sde=1e-3, record_times=(0.00015,)).record_steps()
    with pytest.raises(ValueError):
        EnsembleConfig(n_traj=1)


# -- drift convention ---------------------------------------------------------------


def _free_run(drift=None):
    # k = 0: d<eps>/dt = <D'> = 2 d0 alpha <eps>, so <eps> = eps0 exp(2 d0 alpha t)
    times = (0.02, 0.04, 0.06, 0.08, 0.1)
    cfg = EnsembleConfig(n_traj=100_000, t_end=0.1, record_times=times)
    mc = simulate_ensemble(DiffusionProfile(1.0, 1.0), HarmonicPotential(0.0), GaussianWavepacket(1.0), cfg, drift=drift)
    z = (mc.mean[0] - np.exp(2.0 * np.asarray(times))) / mc.stderr[0]
    return z


def test_ito_drift_includes_diffusivity_gradient():
    assert np.all(np.abs(_free_run()) <= 3.0)


def test_dropping_gradient_term_is_detected():
    # negative control: with k = 0 and no D' term the drift vanishes entirely
    z = _free_run(drift=lambda x: np.zeros_like(x))
    assert np.max(np.abs(z)) > 10.0


@pytest.mark.parametrize("alpha, k, eps0", [(1.0, 1.0, 2.0), (0.25, 0.25, 0.5)])
def test_halving_step_changes_estimates_below_stderr(alpha, k, eps0):
    # default dt_sde against half of it, on one Brownian path: the dt run sums pairs
    # of the dt / 2 draws
    times = tuple(np.round(np.arange(1, 11) * 0.1, 12))
    args = (DiffusionProfile(1.0, alpha), HarmonicPotential(k), GaussianWavepacket(eps0))
    half = simulate_ensemble(*args, EnsembleConfig(n_traj=100_000, dt_sde=5e-4, t_end=1.0, record_times=times))
    default = simulate_ensemble(
        *args, EnsembleConfig(n_traj=100_000, dt_sde=1e-3, t_end=1.0, record_times=times, noise_refinement=2)
    )
    assert np.all(np.abs(half.mean - default.mean) < half.stderr)


# -- comparison -------------------------------------------------------------------------


def test_compare_identical_series():
    cfg = EnsembleConfig(n_traj=2000, t_end=0.3, record_times=(0.1, 0.2, 0.3))
    mc = simulate_ensemble(DiffusionProfile(), HarmonicPotential(), GaussianWavepacket(1.0), cfg)
    pde = {n: mc.series(n) for n in (1, 2)}
    rep = compare_with_pde(pde, mc)
    assert np.all(rep.z == 0.0)
    assert rep.passed
    assert rep.summary()["fraction_within"] == 1.0


def test_compare_schedule_mismatch():
    cfg = EnsembleConfig(n_traj=100, t_end=0.3, record_times=(0.1, 0.2, 0.3))
    mc = simulate_ensemble(DiffusionProfile(), HarmonicPotential(), GaussianWavepacket(1.0), cfg)
    shifted = {n: ObservableSeries([0.1, 0.2, 0.35], mc.mean[j], n) for j, n in enumerate((1, 2))}
    with pytest.raises(ScheduleMismatch):
        compare_with_pde(shifted, mc)
    with pytest.raises(ScheduleMismatch):
        restrict_to(mc.series(1), np.array([0.15]))


def test_compare_flags_large_discrepancy():
    cfg = EnsembleConfig(n_traj=5000, t_end=0.3, record_times=(0.1, 0.2, 0.3))
    mc = simulate_ensemble(DiffusionProfile(), HarmonicPotential(), GaussianWavepacket(1.0), cfg)
    off = {n: ObservableSeries(mc.times, mc.mean[j] + 1.0, n) for j, n in enumerate((1, 2))}
    assert not compare_with_pde(off, mc).passed


def test_pde_agrees_with_ensemble_monotone_case(grid):
    cfg = EnsembleConfig(n_traj=100_000, t_end=5.0)
    mc = simulate_ensemble(DiffusionProfile(1.0, 1.0), HarmonicPotential(1.0), GaussianWavepacket(2.0), cfg)
    rep = compare_with_pde(_pde_moments(grid, 1.0, 1.0, 2.0, 5.0, mc.times), mc)
    assert rep.passed, rep.summary()


def test_pde_agrees_with_ou_closed_form_oracle(grid):
    times = np.round(np.arange(0, 51) * 0.1, 12)
    pde = _pde_moments(grid, 0.0, 1.0, 3.0, 5.0, times)
    np.testing.assert_allclose(pde[1].values, ou_mean(3.0, times), rtol=1e-3)
