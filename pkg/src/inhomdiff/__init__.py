"""
Relaxation of the mean energy gap under position-dependent diffusion.

A conservative finite-volume solver for the drift-diffusion equation in a harmonic
well with diffusivity ``d0 (1 + alpha eps^2)``, observables built on it (S(t), raw
moments, relaxation labels), a bisection search for the critical initial gap, and a
Monte Carlo ensemble that checks the solver independently.
"""
from .criticality import (
    PhasePortrait,
    SearchSettings,
    SMaxCurve,
    find_critical_epsilon,
    s_max_curve,
    slope_critical_epsilon,
    sweep_portrait,
)
from .exceptions import (
    ConfigError,
    NoStationaryDensity,
    NonMonotoneBoundary,
    PacketTooWide,
    ScheduleMismatch,
    SeriesTooShort,
    SolveFailure,
    ZeroInitialGap,
)
from .model import (
    DensityField,
    DiffusionProfile,
    GaussianWavepacket,
    Grid1D,
    HarmonicPotential,
    diffusion_at,
    drift_at,
    initial_density,
    stationary_density,
)
from .observables import (
    Label,
    ObservableSeries,
    RelaxationClassification,
    classify_relaxation,
    initial_slope,
    moment_series,
    raw_moment,
    s_of_t,
)
from .pde import SolverConfig, TridiagonalOperator, assemble_operator, evolve, step
from .sde import EnsembleConfig, MomentEstimate, compare_with_pde, simulate_ensemble

__version__ = "0.1.0"
