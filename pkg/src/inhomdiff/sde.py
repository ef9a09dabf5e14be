"""
Monte Carlo cross-check of the PDE solver.

Trajectories follow the Ito equation

    d eps = [D'(eps) - D(eps) V'(eps)] dt + sqrt(2 D(eps)) dW

integrated by Euler-Maruyama on the open line (no walls). Trajectories are grouped
into fixed-size blocks; block ``b`` draws from a Philox stream keyed by
``(seed, b)``. Block boundaries depend only on ``n_traj`` and ``block_size``, so the
estimates are bit-identical however the blocks are spread over workers, and the
per-block statistics are merged in block order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import ScheduleMismatch
from .model import DiffusionProfile, GaussianWavepacket, HarmonicPotential, drift_at
from .observables import ObservableSeries

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20211212
#: Tolerance for deciding whether two schedules name the same instants.
TIME_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class EnsembleConfig:
    """
    Ensemble size, step, horizon and seed.

    ``record_times`` defaults to every 0.1 time units from 0 to ``t_end``. Each
    step draws ``noise_refinement`` sub-increments and sums them, which lets a run
    at ``2 dt`` share its Brownian path with a run at ``dt`` from the same seed.
    """

    n_traj: int = 100_000
    dt_sde: float = 1e-3
    t_end: float = 5.0
    seed: int = DEFAULT_SEED
    record_times: Optional[tuple] = None
    orders: tuple = (1, 2)
    block_size: int = 8192
    noise_refinement: int = 1

    def __post_init__(self):
        if self.n_traj < 2:
            raise ValueError("need at least two trajectories")
        if not self.dt_sde > 0 or not self.t_end > 0:
            raise ValueError("dt_sde and t_end must be positive")
        if self.block_size < 1 or self.noise_refinement < 1:
            raise ValueError("block_size and noise_refinement must be >= 1")

    def schedule(self) -> np.ndarray:
        if self.record_times is None:
            n = int(round(self.t_end / 0.1))
            return np.round(np.arange(n + 1) * 0.1, 12)
        return np.asarray(self.record_times, dtype=float)

    def record_steps(self) -> np.ndarray:
        times = self.schedule()
        steps = np.rint(times / self.dt_sde).astype(np.int64)
        if np.any(np.abs(steps * self.dt_sde - times) > TIME_MATCH_TOL * max(1.0, times.max())):
            raise ValueError("record times must be multiples of dt_sde")
        if np.any(np.diff(steps) <= 0) or steps[0] < 0:
            raise ValueError("record times must be increasing and non-negative")
        return steps


@dataclass(frozen=True)
class MomentEstimate:
    time: float
    order: int
    mean: float
    stderr: float


@dataclass(frozen=True, eq=False)
class EnsembleMoments:
    """
    Moment estimates on a schedule.

    ``mean[j, i]`` and ``stderr[j, i]`` refer to ``orders[j]`` at ``times[i]``.
    ``tail_mass[i]`` is the fraction of trajectories outside ``|eps| > tail_edge``.
    """

    times: np.ndarray
    orders: tuple
    mean: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    tail_mass: np.ndarray = field(repr=False)
    n_traj: int = 0

    def series(self, order: int) -> ObservableSeries:
        return ObservableSeries(self.times, self.mean[self.orders.index(order)], kind=order)

    def estimates(self) -> list:
        return [
            MomentEstimate(float(t), int(n), float(self.mean[j, i]), float(self.stderr[j, i]))
            for j, n in enumerate(self.orders)
            for i, t in enumerate(self.times)
        ]


def _block_stats(block, profile, potential, packet, config, drift, tail_edge):
    """Mean, M2 and tail count per (order, record time) for one trajectory block."""
    index, size = block
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, index])))
    steps = config.record_steps()
    orders = np.asarray(config.orders)
    mean = np.empty((orders.size, steps.size))
    m2 = np.empty_like(mean)
    tail = np.empty(steps.size)

    x = packet.epsilon0 + np.sqrt(packet.variance) * rng.standard_normal(size)
    dt = config.dt_sde
    r = config.noise_refinement
    noise_scale = np.sqrt(dt / r)
    step = 0
    for i, target in enumerate(steps):
        while step < target:
            z = rng.standard_normal((r, size)).sum(axis=0) if r > 1 else rng.standard_normal(size)
            x = x + drift(x) * dt + np.sqrt(2.0 * profile(x)) * (noise_scale * z)
            step += 1
        for j, n in enumerate(orders):
            v = x**n
            mean[j, i] = v.mean()
            m2[j, i] = np.sum((v - mean[j, i]) ** 2)
        tail[i] = np.count_nonzero(np.abs(x) > tail_edge)
    return size, mean, m2, tail


def _default_drift(profile, potential, x):
    return drift_at(profile, potential, x)


def simulate_ensemble(
    profile: DiffusionProfile,
    potential: HarmonicPotential,
    packet: GaussianWavepacket,
    config: EnsembleConfig = EnsembleConfig(),
    workers: Optional[int] = 1,
    drift: Optional[Callable] = None,
    tail_edge: float = 10.0,
) -> EnsembleMoments:
    """
    Euler-Maruyama ensemble started from Gaussian draws (mean ``epsilon0``,
    standard deviation ``sigma / sqrt(2)``).

    ``drift`` replaces the Ito drift ``x -> a(x)``; it exists for negative controls
    and must be picklable when ``workers != 1``.
    """
    if drift is None:
        drift = partial(_default_drift, profile, potential)
    b = config.block_size
    blocks = [(i, min(b, config.n_traj - i * b)) for i in range(-(-config.n_traj // b))]
    work = partial(
        _block_stats,
        profile=profile,
        potential=potential,
        packet=packet,
        config=config,
        drift=drift,
        tail_edge=tail_edge,
    )
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(blk) for blk in blocks]

    # Chan et al. pairwise merge, always in block order
    count, mean, m2, tail = parts[0]
    mean, m2, tail = mean.copy(), m2.copy(), tail.copy()
    for nb, mb, m2b, tb in parts[1:]:
        total = count + nb
        d = mb - mean
        mean = mean + d * (nb / total)
        m2 = m2 + m2b + d * d * (count * nb / total)
        tail = tail + tb
        count = total
    stderr = np.sqrt(m2 / (count - 1) / count)
    tail_mass = tail / count
    if np.any(tail_mass > 0):
        logger.info("max tail mass beyond |eps|>%g: %.3g", tail_edge, tail_mass.max())
    return EnsembleMoments(config.schedule(), tuple(config.orders), mean, stderr, tail_mass, count)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Per-time z-scores ``(pde - mc) / stderr`` for each compared order."""

    times: np.ndarray
    orders: tuple
    z: np.ndarray = field(repr=False)
    z_max: float = 3.0
    min_fraction: float = 0.99

    @property
    def fraction_within(self) -> float:
        return float(np.mean(np.abs(self.z) <= self.z_max))

    @property
    def passed(self) -> bool:
        return self.fraction_within >= self.min_fraction

    def summary(self) -> dict:
        return {
            "orders": list(self.orders),
            "n_points": int(self.z.size),
            "max_abs_z": float(np.max(np.abs(self.z))),
            "fraction_within": self.fraction_within,
            "z_max": self.z_max,
            "min_fraction": self.min_fraction,
            "passed": self.passed,
        }


def compare_with_pde(
    pde: Mapping[int, ObservableSeries],
    mc: EnsembleMoments,
    orders: Sequence[int] = (1, 2),
    z_max: float = 3.0,
    min_fraction: float = 0.99,
) -> ComparisonReport:
    """
    Compare PDE moment series with the ensemble estimates, order by order.

    Raises
    ------
    ScheduleMismatch
        If any PDE series is not sampled at exactly the ensemble's record times.
    """
    z = np.empty((len(orders), mc.times.size))
    for j, n in enumerate(orders):
        s = pde[n]
        if s.times.shape != mc.times.shape or np.any(np.abs(s.times - mc.times) > TIME_MATCH_TOL):
            raise ScheduleMismatch(f"order {n}: PDE and ensemble record times differ")
        row = mc.orders.index(n)
        diff = s.values - mc.mean[row]
        with np.errstate(divide="ignore", invalid="ignore"):
            zz = np.where(diff == 0, 0.0, diff / mc.stderr[row])
        z[j] = zz
    return ComparisonReport(mc.times.copy(), tuple(orders), z, z_max, min_fraction)


def restrict_to(series: ObservableSeries, times: np.ndarray) -> ObservableSeries:
    """Subsample ``series`` at ``times``; raises ScheduleMismatch if any is missing."""
    idx = np.searchsorted(series.times, times - TIME_MATCH_TOL)
    ok = (idx < series.times.size) & (
        np.abs(series.times[np.minimum(idx, series.times.size - 1)] - times) <= TIME_MATCH_TOL
    )
    if not np.all(ok):
        raise ScheduleMismatch("requested times are not all present in the series")
    return ObservableSeries(series.times[idx], series.values[idx], series.kind)
