"""Moments, the solvation correlation S(t), and relaxation classification."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .exceptions import SeriesTooShort, ZeroInitialGap
from .model import DensityField, DiffusionProfile, GaussianWavepacket, HarmonicPotential, drift_at

#: Default relative threshold above 1 for calling a series non-monotonic.
DEFAULT_DELTA = 1e-4
#: Default window in S for the log-linear rate fit.
DEFAULT_FIT_WINDOW = (0.1, 0.9)


class Label(str, enum.Enum):
    MONOTONIC = "Monotonic"
    NONMONOTONIC = "NonMonotonic"


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """
    Time series of one observable.

    ``kind`` is ``"S"`` for the solvation correlation, ``"U"`` for a normalized
    relaxation fraction, or an integer ``n`` for the raw moment ``<eps^n>``.
    """

    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kind: Union[str, int] = "S"

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class RelaxationClassification:
    label: Label
    s_max: float
    t_max: float
    rate: Optional[float] = None

    @property
    def nonmonotonic(self) -> bool:
        return self.label is Label.NONMONOTONIC


def raw_moment(field: DensityField, n: int) -> float:
    """Trapezoid quadrature of ``<eps^n>``."""
    if n < 0:
        raise ValueError("moment order must be non-negative")
    x = field.grid.nodes
    return field.grid.integrate(x**n * field.values)


def moment_series(snapshots: Iterable[DensityField], n: int) -> ObservableSeries:
    if n < 1:
        raise ValueError("moment order must be >= 1")
    snaps = list(snapshots)
    return ObservableSeries(
        [s.time for s in snaps], [raw_moment(s, n) for s in snaps], kind=n
    )


def s_of_t(snapshots: Iterable[DensityField], packet: GaussianWavepacket) -> ObservableSeries:
    """Solvation correlation ``S(t) = <eps>(t) / epsilon0``."""
    if packet.epsilon0 == 0:
        raise ZeroInitialGap("S(t) divides by epsilon0")
    m = moment_series(snapshots, 1)
    return ObservableSeries(m.times, m.values / packet.epsilon0, kind="S")


def relaxation_fraction(series: ObservableSeries, target: float) -> ObservableSeries:
    """
    Normalized distance to ``target``: ``(m(t) - target) / (m(0) - target)``.

    Starts at 1 and relaxes to 0 from either side, so a raw moment approaching its
    stationary value from below is judged on the same footing as S(t). For odd
    moments ``target`` is 0 and this is the series relative to its initial value.
    """
    gap = series.values[0] - target
    if gap == 0:
        raise ValueError("series starts at its target value")
    return ObservableSeries(series.times, (series.values - target) / gap, kind="U")


def classify_relaxation(
    series: ObservableSeries,
    delta: float = DEFAULT_DELTA,
    fit_window: tuple = DEFAULT_FIT_WINDOW,
) -> RelaxationClassification:
    """
    Label a normalized relaxation series as monotonic or not.

    The series is NonMonotonic when its maximum exceeds ``1 + delta``. For a
    Monotonic series an exponential rate is fitted by least squares on ``log S``
    over the samples with ``S`` inside ``fit_window``.

    Raises
    ------
    SeriesTooShort
        If the final value is not below half of the maximum.
    """
    v = series.values
    i_max = int(np.argmax(v))
    s_max = float(v[i_max])
    if len(v) < 2 or not v[-1] < 0.5 * s_max:
        raise SeriesTooShort("series ends before relaxing below half its maximum")
    t_max = float(series.times[i_max])
    if s_max > 1.0 + delta:
        return RelaxationClassification(Label.NONMONOTONIC, s_max, t_max)
    return RelaxationClassification(Label.MONOTONIC, s_max, t_max, fit_rate(series, fit_window))


def fit_rate(series: ObservableSeries, window: tuple = DEFAULT_FIT_WINDOW) -> Optional[float]:
    lo, hi = window
    sel = (series.values >= lo) & (series.values <= hi)
    if np.count_nonzero(sel) < 3:
        return None
    slope, _ = np.polyfit(series.times[sel], np.log(series.values[sel]), 1)
    return float(-slope)


def initial_slope(
    profile: DiffusionProfile, potential: HarmonicPotential, packet: GaussianWavepacket
) -> float:
    """
    Closed-form ``dS/dt`` at t = 0 for a Gaussian start.

    From ``d<eps>/dt = <D'> - k <D eps>`` with the packet's mean and variance
    ``sigma^2 / 2``: ``d0 * (2 alpha - k - k alpha (epsilon0^2 + 1.5 sigma^2))``.
    """
    if packet.epsilon0 == 0:
        raise ZeroInitialGap("S(t) divides by epsilon0")
    a, k = profile.alpha, potential.k
    third = packet.epsilon0**2 + 1.5 * packet.sigma**2
    return profile.d0 * (2.0 * a - k - k * a * third)


def mean_drift_quadrature(field: DensityField, profile: DiffusionProfile, potential: HarmonicPotential) -> float:
    """``d<eps>/dt`` as the quadrature of the Ito drift against the density."""
    a = drift_at(profile, potential, field.grid.nodes)
    return field.grid.integrate(a * field.values)
