"""Run configuration (TOML) and initial-condition construction.

The config format is flat TOML with a few sections; unknown keys are hard
errors so a typo can never silently change an experiment.  Example::

    dim = 3
    n = 32
    t_max = 1.0
    dt = 1e-3            # omit for adaptive stepping
    output_every = 0.01

    [damping]
    kind = "log"         # none | power | log
    alpha = 0.25

    [ic]
    kind = "taylor_green"
    amplitude = 1.0
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .damping import DampingSpec
from .errors import ConfigError, FieldValidationError
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    dealias,
    forward_transform,
    leray_project,
    reflect_coeffs,
    sobolev_norm,
    zero_mean,
)

IC_KINDS = ("taylor_green", "random_divfree", "single_mode", "from_checkpoint")


@dataclass(frozen=True)
class InitialCondition:
    """Initial-condition selector; a deterministic function of its fields."""

    kind: str = "taylor_green"
    amplitude: float = 1.0
    spectrum_slope: float = 2.0
    peak_wavenumber: float | None = None
    seed: int = 0
    mode_k: tuple = (1, 0, 0)
    mode_component: int = 1
    checkpoint_path: str | None = None


@dataclass
class SimConfig:
    """Fully resolved solver configuration."""

    dim: int
    n: int
    t_max: float
    damping: DampingSpec
    ic: InitialCondition
    box_length: float = 2.0 * math.pi
    dt: float | None = None          # None -> adaptive
    dt_max: float = 1e-2
    cfl: float = 0.5
    seed: int = 0
    output_every: float | None = None
    friedrichs_radius: float | None = None
    velocity_ceiling: float = 1e6
    strict_deterministic: bool = False
    disable_convection: bool = False  # test hook: pure diffusion (+ damping)
    tol_budget: float | None = None

    def __post_init__(self):
        if self.output_every is None:
            # budget quadrature error scales with the output cadence;
            # default to sampling every step in fixed-dt mode
            if self.dt is not None:
                self.output_every = self.dt
            else:
                self.output_every = self.t_max / 100.0 if self.t_max > 0 else 1.0

    def grid(self) -> Grid:
        return Grid(self.dim, self.n, self.box_length)

    def echo(self) -> dict:
        d = {
            "dim": self.dim,
            "n": self.n,
            "box_length": self.box_length,
            "t_max": self.t_max,
            "dt": self.dt,
            "dt_max": self.dt_max,
            "cfl": self.cfl,
            "seed": self.seed,
            "output_every": self.output_every,
            "friedrichs_radius": self.friedrichs_radius,
            "velocity_ceiling": self.velocity_ceiling,
            "strict_deterministic": self.strict_deterministic,
            "disable_convection": self.disable_convection,
            "damping_kind": self.damping.kind,
            "alpha": self.damping.alpha,
            "beta": self.damping.beta,
            "damping_formula": _damping_formula(self.damping),
            "ic_kind": self.ic.kind,
            "ic_amplitude": self.ic.amplitude,
            "ic_seed": self.ic.seed,
        }
        return d


def _damping_formula(spec: DampingSpec) -> str:
    if spec.kind == "log":
        return "alpha * log(e + |u|^2) * |u|^2 * u"
    if spec.kind == "power":
        return "alpha * |u|^(beta-1) * u"
    return "0"


_TOP_KEYS = {
    "dim",
    "n",
    "box_length",
    "t_max",
    "dt",
    "dt_max",
    "cfl",
    "seed",
    "output_every",
    "friedrichs_radius",
    "velocity_ceiling",
    "strict_deterministic",
    "disable_convection",
    "tol_budget",
    "damping",
    "ic",
}
_DAMPING_KEYS = {"kind", "alpha", "beta"}
_IC_KEYS = {
    "kind",
    "amplitude",
    "spectrum_slope",
    "peak_wavenumber",
    "seed",
    "mode_k",
    "mode_component",
    "checkpoint_path",
}


def _reject_unknown(table: dict, allowed: set, prefix: str = "") -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {prefix}{key!r}")


def _require(table: dict, key: str, prefix: str = ""):
    if key not in table:
        raise ConfigError(f"missing required key {prefix}{key!r}")
    return table[key]


def _number(table, key, prefix, lo=None, hi=None, strict_lo=False):
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{prefix}{key}: expected a number, got {v!r}")
    v = float(v)
    if lo is not None and (v <= lo if strict_lo else v < lo):
        op = ">" if strict_lo else ">="
        raise ConfigError(f"{prefix}{key}: must be {op} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{prefix}{key}: must be <= {hi}, got {v}")
    return v


def parse_config(text: str) -> SimConfig:
    """Parse and fully validate a TOML config; unknown keys are rejected."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    _reject_unknown(raw, _TOP_KEYS)

    dim = _require(raw, "dim")
    if dim not in (2, 3):
        raise ConfigError(f"dim: must be 2 or 3, got {dim}")
    n = _require(raw, "n")
    if not isinstance(n, int) or n < 4 or n % 2 != 0:
        raise ConfigError(f"n: must be an even integer >= 4, got {n}")
    t_max = _number(raw, "t_max", "", lo=0.0)

    damping_raw = _require(raw, "damping")
    _reject_unknown(damping_raw, _DAMPING_KEYS, "damping.")
    kind = _require(damping_raw, "kind", "damping.")
    if kind not in ("none", "power", "log"):
        raise ConfigError(f"damping.kind: must be none|power|log, got {kind!r}")
    alpha = _number(damping_raw, "alpha", "damping.") if "alpha" in damping_raw else 0.0
    if alpha < 0:
        raise ConfigError(f"damping.alpha: must be >= 0, got {alpha}")
    beta = None
    if "beta" in damping_raw:
        beta = _number(damping_raw, "beta", "damping.")
    if kind == "power" and beta is None:
        raise ConfigError("damping.beta: required for kind='power'")
    if kind == "log" and alpha <= 0:
        raise ConfigError("damping.alpha: must be > 0 for kind='log'")
    try:
        spec = DampingSpec(kind=kind, alpha=alpha, beta=beta)
    except FieldValidationError as exc:
        raise ConfigError(f"damping: {exc}") from exc

    ic_raw = raw.get("ic", {})
    _reject_unknown(ic_raw, _IC_KEYS, "ic.")
    ic_kind = ic_raw.get("kind", "taylor_green")
    if ic_kind not in IC_KINDS:
        raise ConfigError(f"ic.kind: must be one of {IC_KINDS}, got {ic_kind!r}")
    mode_k = tuple(ic_raw.get("mode_k", (1, 0, 0)[:dim]))
    if len(mode_k) != dim or not all(isinstance(m, int) for m in mode_k):
        raise ConfigError(f"ic.mode_k: expected {dim} integers, got {mode_k}")
    if ic_kind == "from_checkpoint" and "checkpoint_path" not in ic_raw:
        raise ConfigError("ic.checkpoint_path: required for kind='from_checkpoint'")
    ic = InitialCondition(
        kind=ic_kind,
        amplitude=_number(ic_raw, "amplitude", "ic.") if "amplitude" in ic_raw else 1.0,
        spectrum_slope=(
            _number(ic_raw, "spectrum_slope", "ic.")
            if "spectrum_slope" in ic_raw
            else 2.0
        ),
        peak_wavenumber=(
            _number(ic_raw, "peak_wavenumber", "ic.", lo=0.0, strict_lo=True)
            if "peak_wavenumber" in ic_raw
            else None
        ),
        seed=int(ic_raw.get("seed", raw.get("seed", 0))),
        mode_k=mode_k,
        mode_component=int(ic_raw.get("mode_component", 1)),
        checkpoint_path=ic_raw.get("checkpoint_path"),
    )

    dt = _number(raw, "dt", "", lo=0.0, strict_lo=True) if "dt" in raw else None
    cfl = _number(raw, "cfl", "", lo=0.0, hi=1.0, strict_lo=True) if "cfl" in raw else 0.5
    output_every = (
        _number(raw, "output_every", "", lo=0.0, strict_lo=True)
        if "output_every" in raw
        else None
    )
    cfg = SimConfig(
        dim=dim,
        n=n,
        t_max=t_max,
        damping=spec,
        ic=ic,
        box_length=(
            _number(raw, "box_length", "", lo=0.0, strict_lo=True)
            if "box_length" in raw
            else 2.0 * math.pi
        ),
        dt=dt,
        dt_max=_number(raw, "dt_max", "", lo=0.0, strict_lo=True)
        if "dt_max" in raw
        else 1e-2,
        cfl=cfl,
        seed=int(raw.get("seed", 0)),
        output_every=output_every,
        friedrichs_radius=(
            _number(raw, "friedrichs_radius", "", lo=0.0, strict_lo=True)
            if "friedrichs_radius" in raw
            else None
        ),
        velocity_ceiling=(
            _number(raw, "velocity_ceiling", "", lo=0.0, strict_lo=True)
            if "velocity_ceiling" in raw
            else 1e6
        ),
        strict_deterministic=bool(raw.get("strict_deterministic", False)),
        disable_convection=bool(raw.get("disable_convection", False)),
        tol_budget=_number(raw, "tol_budget", "", lo=0.0, strict_lo=True)
        if "tol_budget" in raw
        else None,
    )
    return cfg


def parse_config_file(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _finalize(fld: SpectralField) -> SpectralField:
    out = leray_project(zero_mean(dealias(fld)))
    out.coeffs[(Ellipsis,) + (fld.grid.nyquist_mask,)] = 0.0
    return out


def build_ic(ic: InitialCondition, grid: Grid) -> SpectralField:
    """Construct a real, mean-free, divergence-free initial velocity field."""
    if ic.kind == "taylor_green":
        x = grid.mesh()
        a = ic.amplitude
        if grid.dim == 2:
            vals = np.stack(
                [
                    a * np.sin(x[0]) * np.cos(x[1]),
                    -a * np.cos(x[0]) * np.sin(x[1]),
                ]
            )
        else:
            vals = np.stack(
                [
                    a * np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
                    -a * np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
                    np.zeros(grid.shape),
                ]
            )
        return _finalize(forward_transform(PhysicalField(grid, vals)))

    if ic.kind == "single_mode":
        c = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
        idx = tuple(k % grid.n for k in ic.mode_k)
        idx_neg = tuple((-k) % grid.n for k in ic.mode_k)
        comp = ic.mode_component
        if not (0 <= comp < grid.dim):
            raise FieldValidationError(
                f"mode_component must be in [0, {grid.dim}), got {comp}"
            )
        c[(comp,) + idx] = 0.5 * ic.amplitude
        c[(comp,) + idx_neg] = 0.5 * ic.amplitude
        return _finalize(SpectralField(grid, c))

    if ic.kind == "random_divfree":
        rng = np.random.default_rng(ic.seed)
        shape = (grid.dim,) + grid.shape
        c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        c = 0.5 * (c + np.conj(reflect_coeffs(c, grid)))
        peak = ic.peak_wavenumber if ic.peak_wavenumber is not None else grid.n / 4.0
        kmag = grid.k_mag
        with np.errstate(divide="ignore"):
            shaping = np.where(
                kmag > 0, kmag**ic.spectrum_slope * np.exp(-((kmag / peak) ** 2)), 0.0
            )
        out = _finalize(SpectralField(grid, c * shaping))
        h1 = sobolev_norm(out, 1.0, homogeneous=False)
        if h1 == 0:
            raise FieldValidationError("random IC degenerated to the zero field")
        out.coeffs *= ic.amplitude / h1  # amplitude is the target H1 norm
        return out

    if ic.kind == "from_checkpoint":
        from .io import checkpoint_load  # local import avoids a cycle

        state = checkpoint_load(ic.checkpoint_path, grid=grid)
        return state.u

    raise FieldValidationError(f"unknown initial condition kind {ic.kind!r}")
