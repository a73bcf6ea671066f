"""Convective and damping nonlinearities, evaluated pseudo-spectrally.

Two damping families are supported:

    power:  alpha * |u|**(beta - 1) * u          (beta > 1)
    log:    alpha * log(e + |u|**2) * |u|**2 * u

The logarithmic form reads the argument as e + |u|^2 throughout; that is the
only reading consistent with the energy estimates and with the monotonicity
of the damping map, and it is the formula the configuration echoes.

Physical-space products are followed by 2/3-rule spherical dealiasing.  The
quadratic convection term is then alias-free; the non-polynomial damping term
cannot be dealiased exactly, so the 2/3 rule plus resolution testing is the
documented compromise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, FieldValidationError
from .spectral import (
    SpectralField,
    inverse_transform,
    leray_project,
    physical_to_coeffs,
    spectral_gradient,
    coeffs_to_physical,
)

DAMPING_KINDS = ("none", "power", "log")


@dataclass(frozen=True)
class DampingSpec:
    """Which damping nonlinearity is active, and its parameters.

    kind = "none" evaluates to zero regardless of alpha/beta.  beta is only
    meaningful for kind = "power" and must exceed 1 (|u|**(beta-1) would be
    singular at u = 0 otherwise); the regime of interest is beta >= 3.
    """

    kind: str = "none"
    alpha: float = 0.0
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in DAMPING_KINDS:
            raise FieldValidationError(
                f"damping kind must be one of {DAMPING_KINDS}, got {self.kind!r}"
            )
        if self.alpha < 0:
            raise FieldValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.kind == "power":
            if self.beta is None:
                raise FieldValidationError("kind='power' requires beta")
            if not (self.beta > 1):
                raise FieldValidationError(f"beta must be > 1, got {self.beta}")


def damping_pointwise(v: np.ndarray, spec: DampingSpec, axis: int = 0) -> np.ndarray:
    """Apply the damping map at each point; components along `axis`.

    Continuous at v = 0 for every allowed parameter choice.  Overflow is not
    trapped here; callers operating on solver fields must check finiteness.
    """
    v = np.asarray(v, dtype=np.float64)
    if spec.kind == "none":
        return np.zeros_like(v)
    msq = np.sum(v * v, axis=axis, keepdims=True)
    if spec.kind == "log":
        w = spec.alpha * np.log(np.e + msq) * msq
    else:
        w = spec.alpha * msq ** ((spec.beta - 1.0) / 2.0)
    return w * v


def monotonicity_gap(x, y) -> np.ndarray | float:
    """<a(x)x - a(y)y, x - y> with a(z) = log(e + |z|^2)|z|^2.

    Nonnegative in exact arithmetic (the damping map is monotone).  Accepts
    single vectors or batches with components along the last axis.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xsq = np.sum(x * x, axis=-1, keepdims=True)
    ysq = np.sum(y * y, axis=-1, keepdims=True)
    ax = np.log(np.e + xsq) * xsq
    ay = np.log(np.e + ysq) * ysq
    gap = np.sum((ax * x - ay * y) * (x - y), axis=-1)
    return float(gap) if gap.ndim == 0 else gap


def convective_term(u: SpectralField, u_phys: np.ndarray | None = None) -> SpectralField:
    """Leray-projected, dealiased P(u . grad u).

    `u` should be divergence-free and dealiased; `u_phys` may carry its
    precomputed physical samples to avoid a redundant transform.
    """
    grid = u.grid
    if u_phys is None:
        u_phys = inverse_transform(u, check_hermitian=False).values
    grad_phys = coeffs_to_physical(spectral_gradient(u), grid)  # (j, i, space)
    conv = np.sum(u_phys[:, np.newaxis] * grad_phys, axis=0)
    c = physical_to_coeffs(conv, grid) * grid.dealias_mask
    return leray_project(SpectralField(grid, c))


def damping_term(
    u: SpectralField, spec: DampingSpec, u_phys: np.ndarray | None = None
) -> SpectralField:
    """Pointwise damping, transformed back, dealiased and Leray-projected."""
    grid = u.grid
    if spec.kind == "none":
        return SpectralField(
            grid, np.zeros_like(u.coeffs), divergence_free=True
        )
    if u_phys is None:
        u_phys = inverse_transform(u, check_hermitian=False).values
    d = damping_pointwise(u_phys, spec, axis=0)
    if not np.all(np.isfinite(d)):
        raise BlowUpError(
            f"damping term overflowed (kind={spec.kind}, "
            f"max |u| = {np.max(np.abs(u_phys)):.3e})"
        )
    c = physical_to_coeffs(d, grid) * grid.dealias_mask
    return leray_project(SpectralField(grid, c))
