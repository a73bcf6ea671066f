"""Time integration: integrating-factor Heun scheme, step control, run driver.

Diffusion (viscosity fixed to 1) is handled exactly by the modewise
integrating factor exp(-|k|^2 dt); the projected convection and damping terms
are advanced with an explicit two-stage Heun step, giving a second-order
scheme whose linear part imposes no stability limit.

In fixed-dt mode the clock is bookkept as t = step_count * dt, so a run
resumed from a checkpoint reproduces the uninterrupted trajectory bit for
bit.  Adaptive runs are deterministic but make no bit-exactness claim across
restarts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .budgets import BudgetRow, BudgetSeries, compute_budget_row
from .config import SimConfig, build_ic
from .damping import DampingSpec, convective_term, damping_term
from .errors import BlowUpError, ConfigError, GridMismatchError
from .spectral import (
    Grid,
    SpectralField,
    friedrichs_truncate,
    inverse_transform,
)

_ALIGN_EPS = 1e-9


@dataclass
class SolverState:
    """One point of the discrete trajectory."""

    t: float
    u: SpectralField
    step_count: int = 0
    dt: float = 0.0


def rhs_nonlinear(
    u: SpectralField,
    spec: DampingSpec,
    disable_convection: bool = False,
    velocity_ceiling: float | None = None,
    t: float | None = None,
) -> SpectralField:
    """-P(u . grad u) - damping term; the Laplacian is handled elsewhere.

    Raises BlowUpError on non-finite data or a pointwise speed above the
    configured ceiling.
    """
    grid = u.grid
    u_phys = inverse_transform(u, check_hermitian=False).values
    speed_sq = np.max(np.sum(u_phys * u_phys, axis=0))
    if not np.isfinite(speed_sq):
        raise BlowUpError("non-finite velocity", t=t)
    if velocity_ceiling is not None and speed_sq > velocity_ceiling**2:
        raise BlowUpError(
            f"pointwise speed {np.sqrt(speed_sq):.3e} exceeds ceiling "
            f"{velocity_ceiling:.3e}",
            t=t,
        )
    total = np.zeros_like(u.coeffs)
    if not disable_convection:
        total -= convective_term(u, u_phys=u_phys).coeffs
    if spec.kind != "none":
        total -= damping_term(u, spec, u_phys=u_phys).coeffs
    return SpectralField(grid, total, divergence_free=True)


def step(
    state: SolverState,
    config: SimConfig,
    dt: float | None = None,
    integrating_factor: np.ndarray | None = None,
) -> SolverState:
    """One integrating-factor Heun step of size dt (default: choose_dt)."""
    if dt is None:
        dt = choose_dt(state, config)
    grid = state.u.grid
    if integrating_factor is None:
        integrating_factor = np.exp(-grid.k_sq * dt)
    E = integrating_factor
    spec = config.damping

    def rhs(u):
        return rhs_nonlinear(
            u,
            spec,
            disable_convection=config.disable_convection,
            velocity_ceiling=config.velocity_ceiling,
            t=state.t,
        )

    n1 = rhs(state.u)
    u_pred = SpectralField(
        grid, E * (state.u.coeffs + dt * n1.coeffs), divergence_free=True
    )
    n2 = rhs(u_pred)
    new_c = E * state.u.coeffs + 0.5 * dt * (E * n1.coeffs + n2.coeffs)
    u_new = SpectralField(grid, new_c, divergence_free=True)
    if config.friedrichs_radius is not None:
        u_new = friedrichs_truncate(u_new, config.friedrichs_radius)
    if not np.all(np.isfinite(u_new.coeffs)):
        raise BlowUpError("non-finite coefficients after step", t=state.t)
    return SolverState(
        t=state.t + dt, u=u_new, step_count=state.step_count + 1, dt=dt
    )


def choose_dt(state: SolverState, config: SimConfig) -> float:
    """Advective CFL limit combined with a damping stiffness heuristic.

    Fixed-dt mode returns config.dt unconditionally.  Zero velocity caps the
    step at config.dt_max.  Alignment to output times and t_max is the run
    driver's job.
    """
    if config.dt is not None:
        return config.dt
    spec = config.damping
    grid = state.u.grid
    u_phys = inverse_transform(state.u, check_hermitian=False).values
    msq = np.sum(u_phys * u_phys, axis=0)
    max_speed = float(np.sqrt(np.max(msq)))
    advective = grid.spacing / max_speed if max_speed > 0 else np.inf
    if spec.kind == "log":
        stiff = 1.0 / (1.0 + spec.alpha * float(np.max(np.log(np.e + msq) * msq)))
    elif spec.kind == "power":
        stiff = 1.0 / (
            1.0 + spec.alpha * float(np.max(msq ** ((spec.beta - 1.0) / 2.0)))
        )
    else:
        stiff = np.inf
    dt = config.cfl * min(advective, stiff)
    return float(min(dt, config.dt_max))


@dataclass
class RunResult:
    """Final state plus the budget series and optional state snapshots."""

    state: SolverState
    series: BudgetSeries
    snapshots: list = field(default_factory=list)  # (t, SpectralField) pairs
    blown_up: bool = False
    blowup_message: str = ""


def run(
    config: SimConfig,
    collect_states: bool = False,
    resume_state: SolverState | None = None,
    on_row=None,
) -> RunResult:
    """Integrate from the configured IC (or a resumed state) to t_max.

    Emits a BudgetRow at t = 0 (or the resume time) and then at the output
    cadence; blow-up stops the run, flags the last row, and returns the
    partial series.  Deterministic given (config, seed).
    """
    grid = config.grid()
    if resume_state is not None:
        if resume_state.u.grid != grid:
            raise GridMismatchError("checkpoint grid does not match config grid")
        state = resume_state
    else:
        u0 = build_ic(config.ic, grid)
        state = SolverState(t=0.0, u=u0, step_count=0, dt=config.dt or 0.0)

    series = BudgetSeries(spec=config.damping, config_echo=config.echo())

    def emit(row_state: SolverState, blowup: bool = False):
        row = compute_budget_row(row_state.u, row_state.t, config.damping)
        row.blowup = blowup
        series.append(row)
        if on_row is not None:
            on_row(row)
        if collect_states:
            snapshots.append((row_state.t, row_state.u.copy()))

    snapshots: list = []
    emit(state)

    if config.dt is not None:
        dt = config.dt
        if config.output_every > 10.0 * dt:
            warnings.warn(
                "output cadence exceeds 10*dt; budget time integrals will be "
                "quadrature-limited",
                stacklevel=2,
            )
        n_steps = round(config.t_max / dt)
        if abs(n_steps * dt - config.t_max) > _ALIGN_EPS * max(config.t_max, dt):
            raise ConfigError(
                f"t_max {config.t_max} is not an integer number of steps of dt {dt}"
            )
        stride = max(1, round(config.output_every / dt))
        E = np.exp(-grid.k_sq * dt)
        start = state.step_count
        if abs(start * dt - state.t) > _ALIGN_EPS * max(state.t, dt):
            raise ConfigError(
                "resumed state is not aligned to the fixed step size"
            )
        for i in range(start, n_steps):
            try:
                state = step(state, config, dt=dt, integrating_factor=E)
            except BlowUpError as exc:
                emit(state, blowup=True)
                return RunResult(state, series, snapshots, True, str(exc))
            state.t = (i + 1) * dt  # restart-invariant clock
            if state.step_count % stride == 0 or state.step_count == n_steps:
                emit(state)
    else:
        next_out = state.t + config.output_every
        while state.t < config.t_max - _ALIGN_EPS * max(config.t_max, 1.0):
            dt = choose_dt(state, config)
            dt = min(dt, next_out - state.t, config.t_max - state.t)
            try:
                state = step(state, config, dt=dt)
            except BlowUpError as exc:
                emit(state, blowup=True)
                return RunResult(state, series, snapshots, True, str(exc))
            if state.t >= next_out - _ALIGN_EPS:
                emit(state)
                next_out += config.output_every
        if series.rows[-1].t < state.t:
            emit(state)

    return RunResult(state, series, snapshots, False, "")
