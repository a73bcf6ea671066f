"""Pseudo-spectral incompressible Navier-Stokes on a periodic box with
configurable nonlinear damping, plus energy-budget diagnostics."""

__version__ = "0.1.0"

from .budgets import (
    BudgetRow,
    BudgetSeries,
    CheckReport,
    a_alpha,
    check_h1_inequality,
    check_l2_inequality,
    compute_budget_row,
    gronwall_envelope,
    l4_h1_diagnostic,
    stability_compare,
)
from .config import InitialCondition, SimConfig, build_ic, parse_config, parse_config_file
from .damping import (
    DampingSpec,
    convective_term,
    damping_pointwise,
    damping_term,
    monotonicity_gap,
)
from .errors import (
    BlowUpError,
    CheckpointError,
    ConfigError,
    FieldValidationError,
    GridMismatchError,
    HermitianSymmetryError,
    NSDampError,
)
from .io import checkpoint_load, checkpoint_save, read_budget_csv, write_budget_csv
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    dealias,
    divergence,
    divergence_defect,
    forward_transform,
    friedrichs_truncate,
    inverse_transform,
    laplacian,
    leray_project,
    sobolev_norm,
    spectral_gradient,
)
from .stepping import RunResult, SolverState, choose_dt, rhs_nonlinear, run, step
