"""Sine-basis spectral fields on the unit box with Dirichlet boundary conditions.

A field is stored as real coefficients in the orthonormal basis
``e_k(x) = prod_i sqrt(2) sin(k_i pi x_i)``, ``k_i = 1..n``, on ``(0,1)^dim``.
The Dirichlet Laplacian is diagonal in this basis with eigenvalues
``lam_k = pi^2 |k|^2``, so fractional-power norms reduce to weighted sums of
squared coefficients.  Transforms are type-I discrete sine transforms on the
interior collocation grid ``x_j = j/(m+1)``, ``j = 1..m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

# Zero-padding ratio used when evaluating nonlinear terms on the grid.
# Adequate for the cubic nonlinearities used here: the retained band is
# alias-free provided the input is band-limited to the lowest 2n/3 modes.
DEALIAS_PAD = 1.5

_lam_cache: dict[tuple[int, int], np.ndarray] = {}


@lru_cache(maxsize=None)
def _sine_matrix(n: int, m: int) -> np.ndarray:
    """Synthesis matrix of the orthonormal sine basis on the m-point grid:
    ``S[j, k] = sqrt(2) sin(pi (j+1)(k+1)/(m+1))``.

    Dense matrix transforms beat FFT dispatch overhead at the mode counts
    used here; ``S^T S = (m+1) I`` for ``n <= m`` (discrete orthogonality).
    """
    j = np.arange(1, m + 1, dtype=float)[:, None]
    k = np.arange(1, n + 1, dtype=float)[None, :]
    return np.sqrt(2.0) * np.sin(np.pi * j * k / (m + 1))


def laplacian_spectrum(dim: int, n: int) -> np.ndarray:
    """Eigenvalues ``pi^2 |k|^2`` of the Dirichlet Laplacian, shape ``(n,)*dim``."""
    key = (dim, n)
    if key not in _lam_cache:
        k = np.arange(1, n + 1, dtype=float)
        if dim == 1:
            k2 = k**2
        elif dim == 3:
            k2 = (k**2)[:, None, None] + (k**2)[None, :, None] + (k**2)[None, None, :]
        else:
            raise ValueError(f"dim must be 1 or 3, got {dim}")
        _lam_cache[key] = np.pi**2 * k2
    return _lam_cache[key]


def pad_size(n: int, pad: float = DEALIAS_PAD) -> int:
    """Padded grid size per axis for dealiased nonlinear evaluation."""
    return max(n, int(math.ceil(n * pad)))


def grid_points(dim: int, m: int) -> tuple[np.ndarray, ...]:
    """Interior collocation nodes ``j/(m+1)`` along each axis."""
    x = np.arange(1, m + 1) / (m + 1)
    return (x,) * dim


def coeffs_to_grid(coeffs: np.ndarray, dim: int, m: int | None = None) -> np.ndarray:
    """Synthesize grid values on an ``m``-point-per-axis grid (zero-padding modes)."""
    n = coeffs.shape[0]
    m = n if m is None else m
    if m < n:
        raise ValueError("padded size must be >= number of modes")
    S = _sine_matrix(n, m)
    if dim == 1:
        return S @ coeffs
    out = coeffs
    for _ in range(3):  # contract the leading axis each time, cycling axes
        out = np.tensordot(S, out, axes=(1, 0)).transpose(1, 2, 0)
    return out


def grid_to_coeffs(values: np.ndarray, n: int | None = None) -> np.ndarray:
    """Analyze grid values into sine coefficients, truncating to ``n`` modes."""
    m = values.shape[0]
    dim = values.ndim
    n = m if n is None else n
    S = _sine_matrix(n, m)
    w = 1.0 / (m + 1)
    if dim == 1:
        return (S.T @ values) * w
    out = values
    for _ in range(3):
        out = np.tensordot(S.T, out, axes=(1, 0)).transpose(1, 2, 0)
    return out * w**3


def grid_quadrature(values: np.ndarray) -> float:
    """Quadrature of grid values over the unit box.

    Trapezoidal rule; boundary contributions vanish for integrands that are
    zero on the boundary (true for powers of Dirichlet fields and for V(u)
    with V(0)=0).
    """
    m = values.shape[0]
    return float(values.sum()) / (m + 1) ** values.ndim


@dataclass(frozen=True)
class SpectralField:
    """A scalar field as sine coefficients on ``(0,1)^dim``."""

    dim: int
    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError(f"dim must be 1 or 3, got {self.dim}")
        if self.coeffs.shape != (self.n,) * self.dim:
            raise ValueError(
                f"coeffs shape {self.coeffs.shape} != {(self.n,) * self.dim}"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return replace(self, coeffs=self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return replace(self, coeffs=self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return replace(self, coeffs=self.coeffs * a)

    __rmul__ = __mul__


def zeros(dim: int, n: int) -> SpectralField:
    return SpectralField(dim, n, np.zeros((n,) * dim))


def unit_mode(dim: int, n: int, k: int | tuple[int, ...], amplitude: float = 1.0) -> SpectralField:
    """Field with a single basis coefficient set to ``amplitude``."""
    if isinstance(k, int):
        k = (k,) * dim
    c = np.zeros((n,) * dim)
    c[tuple(ki - 1 for ki in k)] = amplitude
    return SpectralField(dim, n, c)


def to_grid(f: SpectralField, m: int | None = None) -> np.ndarray:
    return coeffs_to_grid(f.coeffs, f.dim, m)


def from_grid(values: np.ndarray, n: int | None = None) -> SpectralField:
    coeffs = grid_to_coeffs(values, n)
    return SpectralField(values.ndim, coeffs.shape[0], coeffs)


def h_norm(f: SpectralField, ell: float = 0.0) -> float:
    """Fractional-power norm ``(sum lam_k^ell |u_k|^2)^(1/2)``; ell=0 is L2."""
    lam = laplacian_spectrum(f.dim, f.n)
    if ell == 0.0:
        return float(np.sqrt((f.coeffs**2).sum()))
    return float(np.sqrt((lam**ell * f.coeffs**2).sum()))


def inner(f: SpectralField, g: SpectralField, ell: float = 0.0) -> float:
    """Inner product weighted by ``lam^ell``."""
    lam = laplacian_spectrum(f.dim, f.n)
    if ell == 0.0:
        return float((f.coeffs * g.coeffs).sum())
    return float((lam**ell * f.coeffs * g.coeffs).sum())


def lq_norm(f: SpectralField, q: float, pad: float = DEALIAS_PAD) -> float:
    """L^q norm by collocation-grid quadrature."""
    vals = to_grid(f, pad_size(f.n, pad))
    return grid_quadrature(np.abs(vals) ** q) ** (1.0 / q)


def apply_nonlinearity(fn, f: SpectralField, pad: float = DEALIAS_PAD) -> SpectralField:
    """Pseudo-spectral evaluation of ``fn(u)``: grid transform, pointwise map,
    inverse transform, truncation back to the original band."""
    m = pad_size(f.n, pad)
    vals = to_grid(f, m)
    return from_grid(fn(vals), n=f.n)


def random_field(rng: np.random.Generator, dim: int, n: int, band: int | None = None) -> SpectralField:
    """Gaussian coefficients restricted to modes with all ``k_i <= band``."""
    band = n if band is None else min(band, n)
    c = np.zeros((n,) * dim)
    c[(slice(0, band),) * dim] = rng.standard_normal((band,) * dim)
    return SpectralField(dim, n, c)


@dataclass(frozen=True)
class SpectralState:
    """A phase-space point ``(u, v)`` at time ``t``; u is position, v velocity."""

    u: SpectralField
    v: SpectralField
    t: float

    def __post_init__(self):
        if (self.u.dim, self.u.n) != (self.v.dim, self.v.n):
            raise ValueError("u and v must share dim and n")

    def __sub__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.u - other.u, self.v - other.v, self.t)

    def scaled(self, a: float) -> "SpectralState":
        return SpectralState(self.u * a, self.v * a, self.t)


def zero_state(dim: int, n: int, t: float = 0.0) -> SpectralState:
    return SpectralState(zeros(dim, n), zeros(dim, n), t)
