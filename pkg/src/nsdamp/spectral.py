"""Periodic-box spectral core: grids, transforms, Leray projection, norms.

Conventions
-----------
The domain is the torus [0, box_length)^dim sampled on n uniform points per
dimension.  Spectral coefficients are Fourier-series coefficients, i.e.

    f(x) = sum_k  c_k exp(i * k_phys . x),     k_phys = 2*pi*k / box_length,

so a unit cosine mode ``cos(x_1)`` has coefficients 1/2 at k = (+-1, 0, ...).
All spectral inner products and norms carry the volume factor
V = box_length**dim so that they agree with the L2(torus) inner product with
plain Lebesgue measure (Parseval-exact):

    <f, g>_L2 = V * sum_k conj(c_k) d_k.

The Nyquist plane (|k_axis| = n/2) is zeroed after every odd-order
differentiation to keep Hermitian symmetry exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft

from .errors import FieldValidationError, GridMismatchError, HermitianSymmetryError

HERMITIAN_TOL = 1e-12


def _fft_workers() -> int:
    """Internal FFT parallelism, capped by NS_THREADS (default 1: strict
    deterministic reduction order)."""
    value = os.environ.get("NS_THREADS")
    try:
        return max(1, int(value)) if value is not None else 1
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid metadata and wavenumber map.

    Parameters
    ----------
    dim : 2 or 3.
    n : points per dimension; must be even and >= 4 (powers of two preferred
        for FFT speed).
    box_length : side of the periodic box, default 2*pi so integer modes have
        integer physical wavenumbers.
    """

    dim: int
    n: int
    box_length: float = 2.0 * np.pi

    # derived arrays, excluded from equality/hash
    k: np.ndarray = field(init=False, repr=False, compare=False)
    k_sq: np.ndarray = field(init=False, repr=False, compare=False)
    k_mag: np.ndarray = field(init=False, repr=False, compare=False)
    nyquist_mask: np.ndarray = field(init=False, repr=False, compare=False)
    dealias_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise FieldValidationError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2 != 0:
            raise FieldValidationError(f"n must be even and >= 4, got {self.n}")
        if not (self.box_length > 0):
            raise FieldValidationError(f"box_length must be > 0, got {self.box_length}")

        modes = np.fft.fftfreq(self.n, d=1.0 / self.n)  # integers, Nyquist = -n/2
        axes = np.meshgrid(*([modes] * self.dim), indexing="ij")
        scale = 2.0 * np.pi / self.box_length
        k = scale * np.stack(axes)
        k_sq = np.sum(k * k, axis=0)
        nyq = np.zeros(self.shape, dtype=bool)
        for a in axes:
            nyq |= np.abs(a) == self.n // 2
        k_cut = (2.0 / 3.0) * scale * (self.n // 2)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "k_sq", k_sq)
        object.__setattr__(self, "k_mag", np.sqrt(k_sq))
        object.__setattr__(self, "nyquist_mask", nyq)
        object.__setattr__(self, "dealias_mask", np.sqrt(k_sq) < k_cut)

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def npoints(self) -> int:
        return self.n**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def k_max(self) -> float:
        """Largest resolved wavenumber magnitude on the lattice."""
        return float(np.max(self.k_mag))

    def mesh(self) -> np.ndarray:
        """Physical coordinates, shape (dim, n, ..., n)."""
        xs = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(*([xs] * self.dim), indexing="ij"))


@dataclass
class PhysicalField:
    """Real vector field sampled on the grid; values shape (dim, n, ..., n)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.grid.dim,) + self.grid.shape
        if self.values.shape != expected:
            raise FieldValidationError(
                f"values shape {self.values.shape} != expected {expected}"
            )


@dataclass
class SpectralField:
    """Fourier coefficients of a real vector field; coeffs shape (dim, n, ..., n)."""

    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        expected = (self.grid.dim,) + self.grid.shape
        if self.coeffs.shape != expected:
            raise FieldValidationError(
                f"coeffs shape {self.coeffs.shape} != expected {expected}"
            )

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.divergence_free)


def zero_spectral(grid: Grid, divergence_free: bool = True) -> SpectralField:
    return SpectralField(
        grid, np.zeros((grid.dim,) + grid.shape, dtype=np.complex128), divergence_free
    )


def require_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")


def _first_bad_index(values: np.ndarray):
    bad = ~np.isfinite(values)
    return tuple(int(i) for i in np.argwhere(bad)[0])


def validate_finite(f: PhysicalField) -> None:
    """Reject non-finite physical data, naming the first offending index."""
    if not np.all(np.isfinite(f.values)):
        raise FieldValidationError(
            f"non-finite value at index {_first_bad_index(f.values)}"
        )


def reflect_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Coefficients at -k, i.e. c[-k mod n] along every spatial axis."""
    rev = (-np.arange(grid.n)) % grid.n
    out = c
    for ax in range(c.ndim - grid.dim, c.ndim):
        out = np.take(out, rev, axis=ax)
    return out


def hermitian_defect(g: SpectralField) -> float:
    """Max |c(k) - conj(c(-k))| relative to the coefficient scale."""
    c = g.coeffs
    defect = np.max(np.abs(c - np.conj(reflect_coeffs(c, g.grid))))
    scale = np.max(np.abs(c))
    return float(defect / scale) if scale > 0 else float(defect)


def _spatial_axes(grid: Grid, arr: np.ndarray):
    return tuple(range(arr.ndim - grid.dim, arr.ndim))


def forward_transform(f: PhysicalField) -> SpectralField:
    """Physical samples -> Fourier-series coefficients."""
    validate_finite(f)
    c = physical_to_coeffs(f.values, f.grid)
    return SpectralField(f.grid, c)


def inverse_transform(g: SpectralField, check_hermitian: bool = True) -> PhysicalField:
    """Fourier-series coefficients -> real physical samples."""
    if check_hermitian and hermitian_defect(g) > 1e-8:
        raise HermitianSymmetryError(
            f"Hermitian symmetry broken (relative defect {hermitian_defect(g):.3e})"
        )
    return PhysicalField(g.grid, coeffs_to_physical(g.coeffs, g.grid))


def coeffs_to_physical(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse transform of a raw coefficient array (any leading axes)."""
    w = _fft.ifftn(c, axes=_spatial_axes(grid, c), workers=_fft_workers())
    return np.real(w) * grid.npoints


def physical_to_coeffs(v: np.ndarray, grid: Grid) -> np.ndarray:
    w = _fft.fftn(v, axes=_spatial_axes(grid, v), workers=_fft_workers())
    return w / grid.npoints


def leray_project(g: SpectralField) -> SpectralField:
    """Modewise projection onto divergence-free fields; zero mode untouched."""
    grid = g.grid
    k, k_sq = grid.k, grid.k_sq
    dot = np.sum(k * g.coeffs, axis=0)
    safe = np.where(k_sq > 0, k_sq, 1.0)
    factor = np.where(k_sq > 0, dot / safe, 0.0)
    return SpectralField(grid, g.coeffs - k * factor, divergence_free=True)


def friedrichs_truncate(g: SpectralField, radius: float) -> SpectralField:
    """Sharp low-pass cutoff keeping modes with |k| < radius."""
    if not (radius > 0):
        raise FieldValidationError(f"truncation radius must be > 0, got {radius}")
    mask = g.grid.k_mag < radius
    return SpectralField(g.grid, g.coeffs * mask, g.divergence_free)


def dealias(g: SpectralField) -> SpectralField:
    """2/3-rule spherical truncation."""
    return SpectralField(g.grid, g.coeffs * g.grid.dealias_mask, g.divergence_free)


def grad_coeffs(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Multiply by i*k_j along a new leading axis; Nyquist modes zeroed.

    Input shape (..., n, ..., n) -> output (dim, ..., n, ..., n).
    """
    extra = c.ndim - grid.dim
    k = grid.k.reshape((grid.dim,) + (1,) * extra + grid.shape)
    out = 1j * k * c[np.newaxis]
    out[(Ellipsis,) + (grid.nyquist_mask,)] = 0.0
    return out


def spectral_gradient(g: SpectralField) -> np.ndarray:
    """Coefficients of the velocity gradient; out[j, i] = d_j u_i."""
    return grad_coeffs(g.coeffs, g.grid)


def laplacian(g: SpectralField) -> SpectralField:
    """Spectral Laplacian (multiplier -|k|^2)."""
    return SpectralField(g.grid, -g.grid.k_sq * g.coeffs, g.divergence_free)


def divergence(g: SpectralField) -> np.ndarray:
    """Scalar coefficients i * sum_j k_j c_j; Nyquist modes zeroed."""
    d = 1j * np.sum(g.grid.k * g.coeffs, axis=0)
    d[g.grid.nyquist_mask] = 0.0
    return d


def divergence_defect(g: SpectralField) -> float:
    """Max modewise |k . c| / (|k| |c|), skipping negligible modes."""
    grid = g.grid
    num = np.abs(np.sum(grid.k * g.coeffs, axis=0))
    den = grid.k_mag * np.sqrt(np.sum(np.abs(g.coeffs) ** 2, axis=0))
    dmax = np.max(den)
    if dmax == 0:
        return 0.0
    keep = den > 1e-13 * dmax
    if not np.any(keep):
        return 0.0
    return float(np.max(num[keep] / den[keep]))


def spectral_l2_norm(g: SpectralField) -> float:
    """L2(torus) norm computed from coefficients (Parseval)."""
    return float(np.sqrt(g.grid.volume * np.sum(np.abs(g.coeffs) ** 2)))


def physical_l2_norm(f: PhysicalField) -> float:
    """Rectangle-rule L2 norm (exact for resolved trigonometric polynomials)."""
    w = f.grid.volume / f.grid.npoints
    return float(np.sqrt(w * np.sum(f.values**2)))


def l2_inner(a: SpectralField, b: SpectralField) -> float:
    require_same_grid(a, b)
    return float(a.grid.volume * np.real(np.sum(np.conj(a.coeffs) * b.coeffs)))


def sobolev_norm(g: SpectralField, s: float, homogeneous: bool = False) -> float:
    """Fourier-multiplier Sobolev norm.

    Homogeneous: weight |k|^(2s), zero mode contributes nothing (and must be
    zero when s < 0).  Inhomogeneous: weight (1 + |k|^2)^s, so s = 0 is the
    plain L2 norm.
    """
    grid = g.grid
    csq = np.sum(np.abs(g.coeffs) ** 2, axis=0)
    if homogeneous:
        if s < 0:
            zero_amp = np.sqrt(csq[(0,) * grid.dim])
            if zero_amp > 1e-14 * max(1.0, np.sqrt(np.max(csq))):
                raise FieldValidationError(
                    "homogeneous norm with s < 0 requires a mean-free field"
                )
        with np.errstate(divide="ignore"):
            m = np.where(grid.k_sq > 0, grid.k_sq ** s, 0.0)
    else:
        m = (1.0 + grid.k_sq) ** s
    return float(np.sqrt(grid.volume * np.sum(m * csq)))


def zero_mean(g: SpectralField) -> SpectralField:
    c = g.coeffs.copy()
    c[(slice(None),) + (0,) * g.grid.dim] = 0.0
    return SpectralField(g.grid, c, g.divergence_free)
