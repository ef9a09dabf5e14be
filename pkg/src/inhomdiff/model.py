"""
Physical model on the energy-gap coordinate.

The density P(eps, t) obeys

    dP/dt = d/deps [ D(eps) (dP/deps + V'(eps) P) ]

with D(eps) = d0 (1 + alpha eps^2) and V(eps) = k eps^2 / 2. Everything here is an
immutable value type or a pure function of one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import NoStationaryDensity, PacketTooWide, ZeroInitialGap

#: Smallest admissible number of grid nodes.
MIN_GRID_POINTS = 11
#: Packet must sit at least this many widths inside the right-hand wall.
PACKET_CLEARANCE = 6.0


@dataclass(frozen=True)
class DiffusionProfile:
    """Quadratic diffusivity ``D(eps) = d0 * (1 + alpha * eps**2)``."""

    d0: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError(f"d0 must be positive, got {self.d0}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")

    def __call__(self, eps):
        return self.d0 * (1.0 + self.alpha * np.square(eps))

    def derivative(self, eps):
        return 2.0 * self.d0 * self.alpha * np.asarray(eps, dtype=float)


@dataclass(frozen=True)
class HarmonicPotential:
    """Harmonic well ``V(eps) = k eps**2 / 2``; ``k = 0`` is free diffusion."""

    k: float = 1.0

    def __post_init__(self):
        if not self.k >= 0:
            raise ValueError(f"k must be non-negative, got {self.k}")

    def energy(self, eps):
        return 0.5 * self.k * np.square(eps)

    def force(self, eps):
        """Gradient ``V'(eps) = k eps`` (the restoring force with its sign flipped)."""
        return self.k * np.asarray(eps, dtype=float)


@dataclass(frozen=True)
class GaussianWavepacket:
    """
    Initial density ``exp(-((eps - epsilon0) / sigma)**2) / (sqrt(pi) sigma)``.

    The variance of this packet is ``sigma**2 / 2``.
    """

    epsilon0: float
    sigma: float = 0.1

    def __post_init__(self):
        if self.epsilon0 == 0:
            raise ZeroInitialGap("epsilon0 = 0 leaves S(t) undefined")
        if not self.epsilon0 > 0:
            raise ValueError(f"epsilon0 must be positive, got {self.epsilon0}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def variance(self) -> float:
        return 0.5 * self.sigma**2

    def density(self, eps):
        z = (np.asarray(eps, dtype=float) - self.epsilon0) / self.sigma
        return np.exp(-z * z) / (np.sqrt(np.pi) * self.sigma)


@dataclass(frozen=True)
class Grid1D:
    """
    Uniform grid on ``[eps_min, eps_max]`` with an odd node count.

    On a symmetric domain the nodes are built as integer multiples of ``h`` so that
    ``nodes[i] == -nodes[-1 - i]`` holds bit for bit.
    """

    eps_min: float = -10.0
    eps_max: float = 10.0
    n: int = 2001

    def __post_init__(self):
        if self.n < MIN_GRID_POINTS:
            raise ValueError("grid too coarse")
        if self.n % 2 == 0:
            raise ValueError("grid point count must be odd")
        if not self.eps_min < 0 < self.eps_max:
            raise ValueError("grid must satisfy eps_min < 0 < eps_max")

    @property
    def h(self) -> float:
        return (self.eps_max - self.eps_min) / (self.n - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.eps_min == -self.eps_max:
            m = (self.n - 1) // 2
            x = self.h * np.arange(-m, m + 1, dtype=float)
        else:
            x = self.eps_min + self.h * np.arange(self.n, dtype=float)
            x[-1] = self.eps_max
        x.flags.writeable = False
        return x

    @cached_property
    def midpoints(self) -> np.ndarray:
        x = self.nodes
        m = 0.5 * (x[1:] + x[:-1])
        m.flags.writeable = False
        return m

    def integrate(self, values) -> float:
        """Trapezoid rule over the whole grid."""
        return float(np.trapezoid(values, dx=self.h))


@dataclass(frozen=True, eq=False)
class DensityField:
    """Probability density sampled on a grid at a given time."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        return self.grid.integrate(self.values)


def diffusion_at(profile: DiffusionProfile, eps):
    """Diffusivity at ``eps``."""
    return profile(eps)


def drift_at(profile: DiffusionProfile, potential: HarmonicPotential, eps):
    """
    Ito drift equivalent to the flux-form equation.

    ``a(eps) = D'(eps) - D(eps) V'(eps)``. The ``D'`` term is the noise-induced drift
    that a state-dependent diffusivity requires in the Ito convention.
    """
    return profile.derivative(eps) - profile(eps) * potential.force(eps)


def initial_density(packet: GaussianWavepacket, grid: Grid1D) -> DensityField:
    """Sample the Gaussian packet on ``grid`` and renormalize to unit trapezoid mass."""
    if grid.eps_max - packet.epsilon0 < PACKET_CLEARANCE * packet.sigma:
        raise PacketTooWide(
            f"packet at {packet.epsilon0} with sigma {packet.sigma} is within "
            f"{PACKET_CLEARANCE} widths of the wall at {grid.eps_max}"
        )
    p = packet.density(grid.nodes)
    p[0] = p[-1] = 0.0
    return DensityField(grid, p / grid.integrate(p), 0.0)


def stationary_density(potential: HarmonicPotential, grid: Grid1D) -> DensityField:
    """Zero-flux density ``exp(-V) / Z``; independent of the diffusion profile."""
    if potential.k == 0:
        raise NoStationaryDensity("free diffusion has no normalizable stationary state")
    p = np.exp(-potential.energy(grid.nodes))
    p[0] = p[-1] = 0.0
    return DensityField(grid, p / grid.integrate(p), 0.0)


def stationary_moment(potential: HarmonicPotential, n: int) -> float:
    """Raw moment ``<eps^n>`` of the untruncated stationary Gaussian."""
    if potential.k == 0:
        raise NoStationaryDensity("free diffusion has no normalizable stationary state")
    if n % 2:
        return 0.0
    double_factorial = float(np.prod(np.arange(n - 1, 0, -2))) if n > 1 else 1.0
    return double_factorial / potential.k ** (n // 2)
