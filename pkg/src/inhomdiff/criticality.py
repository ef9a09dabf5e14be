"""
Critical initial gap and the (alpha, k) phase portrait.

For fixed ``(alpha, k)`` the non-monotonic phase occupies initial gaps between 0 and
a critical value. We locate that value by probing a handful of starting points,
checking that the label changes at most once, and bisecting the crossing.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import InhomDiffError, NonMonotoneBoundary, SeriesTooShort
from .model import DiffusionProfile, GaussianWavepacket, Grid1D, HarmonicPotential
from .observables import (
    DEFAULT_DELTA,
    DEFAULT_FIT_WINDOW,
    Label,
    RelaxationClassification,
    classify_relaxation,
    initial_slope,
    raw_moment,
    s_of_t,
)
from .pde import SolverConfig, evolve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSettings:
    """
    Everything a single cell of the sweep needs besides ``(alpha, k)``.

    The run horizon for restoring strength ``k`` is ``max(t_end, t_end / (d0 k))``,
    capped at ``t_end_max``; free diffusion (``k = 0``) always uses ``t_end_max``.
    """

    d0: float = 1.0
    sigma: float = 0.1
    grid: Grid1D = Grid1D()
    dt: float = 1e-3
    theta: float = 0.5
    snapshot_stride: int = 10
    tol_mass: float = 1e-6
    t_end: float = 5.0
    t_end_max: float = 40.0
    delta: float = DEFAULT_DELTA
    fit_window: tuple = DEFAULT_FIT_WINDOW
    tol_eps: float = 0.01
    eps_hi: float = 5.0
    probes: tuple = (0.5, 1.0, 2.0, 3.5)

    def horizon(self, k: float) -> float:
        if k <= 0:
            return self.t_end_max
        return min(max(self.t_end, self.t_end / (self.d0 * k)), self.t_end_max)

    def solver(self, k: float) -> SolverConfig:
        return SolverConfig(self.dt, self.horizon(k), self.theta, self.snapshot_stride, self.tol_mass)

    def bracket(self) -> list:
        lo = self.sigma
        inner = [p for p in sorted(self.probes) if lo < p < self.eps_hi]
        return [lo, *inner, self.eps_hi]


@dataclass(frozen=True, eq=False)
class SMaxCurve:
    alpha: float
    k: float
    epsilon0s: np.ndarray = field(repr=False)
    s_max: np.ndarray = field(repr=False)
    labels: tuple = ()


@dataclass(frozen=True, eq=False)
class PhasePortrait:
    """
    Critical gaps over an ``(alpha, k)`` grid.

    ``critical[i, j]`` belongs to ``ks[i]`` and ``alphas[j]``, so the ``alpha = 0``
    line is the first column when alphas start at 0. ``status`` holds ``"ok"``,
    ``"saturated"`` (non-monotonic up to the top of the bracket) or the name of the
    error that stopped the cell; failed cells hold NaN.
    """

    alphas: np.ndarray
    ks: np.ndarray
    critical: np.ndarray
    status: np.ndarray

    def rows(self):
        """Long-format ``(alpha, k, critical, status)`` rows, k-major then alpha."""
        for i, k in enumerate(self.ks):
            for j, a in enumerate(self.alphas):
                yield float(a), float(k), float(self.critical[i, j]), str(self.status[i, j])


def slope_critical_epsilon(alpha: float, k: float, d0: float = 1.0, sigma: float = 0.1) -> float:
    """
    Largest gap with a positive closed-form initial slope of S.

    Solves ``2 alpha - k - k alpha (e^2 + 1.5 sigma^2) = 0`` for ``e``; 0 when the
    slope is never positive and ``inf`` for free diffusion with ``alpha > 0``.
    """
    if alpha <= 0:
        return 0.0
    if k <= 0:
        return math.inf
    e2 = (2.0 * alpha - k) / (k * alpha) - 1.5 * sigma**2
    return math.sqrt(e2) if e2 > 0 else 0.0


def relaxation(alpha: float, k: float, epsilon0: float, settings: SearchSettings = SearchSettings()) -> RelaxationClassification:
    """Full PDE run from ``epsilon0`` followed by :func:`classify_relaxation`."""
    packet = GaussianWavepacket(epsilon0, settings.sigma)
    snaps = evolve(
        packet,
        DiffusionProfile(settings.d0, alpha),
        HarmonicPotential(k),
        settings.grid,
        settings.solver(k),
    )
    return classify_relaxation(s_of_t(snaps, packet), settings.delta, settings.fit_window)


def relaxation_label(alpha: float, k: float, epsilon0: float, settings: SearchSettings = SearchSettings()) -> Label:
    """
    Label only. The run stops as soon as S exceeds ``1 + delta``, since nothing
    after that can change the verdict.
    """
    packet = GaussianWavepacket(epsilon0, settings.sigma)
    threshold = (1.0 + settings.delta) * epsilon0

    def crossed(field):
        return raw_moment(field, 1) > threshold

    snaps = evolve(
        packet,
        DiffusionProfile(settings.d0, alpha),
        HarmonicPotential(k),
        settings.grid,
        settings.solver(k),
        stop=crossed,
    )
    series = s_of_t(snaps, packet)
    if series.values.max() > 1.0 + settings.delta:
        return Label.NONMONOTONIC
    return classify_relaxation(series, settings.delta, settings.fit_window).label


def find_critical_epsilon(alpha: float, k: float, settings: SearchSettings = SearchSettings()) -> float:
    """
    Largest initial gap with non-monotonic relaxation, to within ``tol_eps``.

    Returns 0 when even the smallest admissible gap (``sigma``) relaxes
    monotonically, and ``eps_hi`` when every probe up to it is non-monotonic.

    Raises
    ------
    NonMonotoneBoundary
        If the labels over the probe points change more than once, or go from
        monotonic to non-monotonic.
    """
    if not settings.tol_eps > 0:
        raise ValueError("tol_eps must be positive")
    points = settings.bracket()
    labels = [relaxation_label(alpha, k, e, settings) for e in points]
    nonmono = [lab is Label.NONMONOTONIC for lab in labels]
    n_switch = sum(a != b for a, b in zip(nonmono, nonmono[1:]))
    if n_switch > 1 or (n_switch == 1 and not nonmono[0]):
        pattern = ", ".join(f"{e:g}:{lab.value}" for e, lab in zip(points, labels))
        raise NonMonotoneBoundary(f"alpha={alpha}, k={k}: {pattern}")
    if not nonmono[0]:
        return 0.0
    if all(nonmono):
        return float(points[-1])

    j = nonmono.index(False)
    lo, hi = points[j - 1], points[j]
    while hi - lo > settings.tol_eps:
        mid = 0.5 * (lo + hi)
        if relaxation_label(alpha, k, mid, settings) is Label.NONMONOTONIC:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def s_max_curve(alpha: float, k: float, epsilon0s: Sequence[float], settings: SearchSettings = SearchSettings()) -> SMaxCurve:
    eps = np.asarray(epsilon0s, dtype=float)
    if np.any(eps <= 0) or np.any(eps > 2):
        raise ValueError("epsilon0 samples must lie in (0, 2]")
    results = [relaxation(alpha, k, e, settings) for e in eps]
    return SMaxCurve(
        alpha, k, eps, np.array([r.s_max for r in results]), tuple(r.label.value for r in results)
    )


def _cell(args):
    alpha, k, settings = args
    try:
        value = find_critical_epsilon(alpha, k, settings)
    except (InhomDiffError, ValueError) as exc:
        logger.warning("cell alpha=%g k=%g failed: %s", alpha, k, exc)
        return math.nan, type(exc).__name__
    return value, ("saturated" if value >= settings.eps_hi else "ok")


def sweep_portrait(
    alphas: Sequence[float],
    ks: Sequence[float],
    settings: SearchSettings = SearchSettings(),
    workers: Optional[int] = 1,
) -> PhasePortrait:
    """
    Critical gap for every ``(alpha, k)`` pair.

    Cells are independent and may be spread over ``workers`` processes; results are
    placed by index, so the output does not depend on the worker count.
    """
    alphas = np.asarray(alphas, dtype=float)
    ks = np.asarray(ks, dtype=float)
    if alphas.size == 0 or ks.size == 0:
        raise ValueError("empty sweep range")
    tasks = [(float(a), float(k), settings) for k in ks for a in alphas]
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    shape = (ks.size, alphas.size)
    critical = np.array([r[0] for r in results], dtype=float).reshape(shape)
    status = np.array([r[1] for r in results], dtype=object).reshape(shape)
    return PhasePortrait(alphas, ks, critical, status)


def linear_range(lo: float, hi: float, resolution: int) -> np.ndarray:
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    return np.linspace(lo, hi, resolution)
