"""Quantum potential dynamics simulator."""

from .central import (
    CentralInvariants, Regime, RegimeKind, angular_function, angular_kinetic_f, classify,
    effective_force, integrate_radial, invariants_of, radial_trajectory,
)
from .config import ScenarioConfig, load_config, parse_config, render
from .dynamics import (
    Event, IntegratorSettings, ParticleState, TrajectoryRecord, constraint_residual,
    dbb_initial_velocity, detect_escape, integrate_dbb, integrate_qpd,
)
from .ensemble import (
    DbbExact, EnsembleSpec, EnsembleStats, GaussianPerturbation, evolve_ensemble,
    gaussian_prediction, sample_initial,
)
from .errors import (
    DomainError, NodeError, NonNormalizableError, ParseError, QPDError, StepFailure, ValidationError,
)
from .oracles import coherent_trajectory, free_gaussian_escape, free_gaussian_trajectory
from .potential import (
    ClassicalPotential, ParticleEnergy, particle_energy, quantum_potential, quantum_potential_fd,
    total_force,
)
from .wavemodels import (
    CentralSuperposition, CoherentState1D, FieldSample, FreeGaussian1D, HarmonicEigenstate1D,
    HydrogenLike, StepEigenstate1D, UnitConvention, evaluate, phase_gradient, spherical_harmonic,
)

__version__ = "0.1.0"
