"""Truncated Fourier series on T^l with FFT-backed grid transforms.

A :class:`FourierMap` stores the complex coefficients ``f_k`` of a real
periodic map ``T^l -> R^shape`` on a uniform power-of-two grid.  Grid axes
come first so that pointwise linear algebra on grid samples is a plain
batched numpy operation::

    coeffs.shape == (*grid, *shape)

Coefficients follow numpy's FFT ordering and are normalized so that
``f(theta) = sum_k f_k exp(2 pi i k . theta)``.  The Nyquist mode of every
axis is kept at zero; it is ambiguous for shifts and derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GridError

__all__ = [
    "Frequency",
    "FourierMap",
    "StripNorm",
    "as_omega",
    "is_power_of_two",
    "wavenumbers",
]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Frequency:
    """Rotation vector in torus cycles; ``kind`` is ``"map"`` or ``"flow"``."""

    omega: tuple
    kind: str = "map"

    def __post_init__(self):
        om = tuple(float(w) for w in np.atleast_1d(self.omega))
        if not all(np.isfinite(om)):
            raise ValueError(f"non-finite frequency {om}")
        if self.kind not in ("map", "flow"):
            raise ValueError(f"unknown frequency kind {self.kind!r}")
        object.__setattr__(self, "omega", om)

    @property
    def l(self) -> int:
        return len(self.omega)

    @property
    def reduced(self) -> np.ndarray:
        """Components reduced mod 1 (meaningful for maps only)."""
        return np.mod(np.asarray(self.omega), 1.0)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.omega, dtype=dtype)


def as_omega(omega) -> np.ndarray:
    if isinstance(omega, Frequency):
        return np.asarray(omega.omega, dtype=float)
    return np.atleast_1d(np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class StripNorm:
    """Weighted l1 bound ``sum_k |f_k| exp(2 pi |k|_1 rho)`` of a map."""

    rho: float
    value: float

    def __float__(self):
        return float(self.value)


def wavenumbers(grid: Sequence[int]) -> list[np.ndarray]:
    """Integer wavenumbers per axis in FFT order."""
    return [np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64) for n in grid]


def _mode_mesh(grid):
    ks = wavenumbers(grid)
    return np.meshgrid(*ks, indexing="ij")


def _nyquist_mask(grid):
    """Boolean array over the grid, True at modes with any |k_j| = N_j/2."""
    mask = np.zeros(tuple(grid), dtype=bool)
    for axis, n in enumerate(grid):
        if n % 2 == 0 and n > 1:
            idx = [slice(None)] * len(grid)
            idx[axis] = n // 2
            mask[tuple(idx)] = True
    return mask


def _expand(arr, nvalue):
    return arr.reshape(arr.shape + (1,) * nvalue)


class FourierMap:
    """Real-valued periodic map represented by its Fourier coefficients."""

    __slots__ = ("_coeffs", "_l")

    def __init__(self, coeffs, l: int = 1):
        coeffs = np.array(coeffs, dtype=np.complex128)
        if coeffs.ndim < l:
            raise GridError("coefficient array has fewer axes than the torus dimension")
        grid = coeffs.shape[:l]
        for n in grid:
            if not is_power_of_two(n):
                raise GridError(f"grid size {n} is not a power of two")
        coeffs.flags.writeable = False
        self._coeffs = coeffs
        self._l = int(l)

    # ------------------------------------------------------------------
    # construction
    @classmethod
    def from_grid(cls, samples, l: int = 1) -> "FourierMap":
        """Coefficients of the trigonometric interpolant of grid samples."""
        samples = np.asarray(samples)
        if np.iscomplexobj(samples):
            samples = samples.real
        samples = samples.astype(float, copy=False)
        grid = samples.shape[:l]
        if len(grid) < l:
            raise GridError("samples have fewer axes than the torus dimension")
        for n in grid:
            if not is_power_of_two(n):
                raise GridError(f"grid size {n} is not a power of two")
        if not np.all(np.isfinite(samples)):
            bad = np.argwhere(~np.isfinite(samples))[0]
            raise GridError(f"non-finite sample at index {tuple(int(i) for i in bad)}")
        axes = tuple(range(l))
        coeffs = np.fft.fftn(samples, axes=axes) / np.prod(grid)
        coeffs = _hermitian(coeffs, l)
        coeffs[_nyquist_mask(grid)] = 0.0
        return cls(coeffs, l)

    @classmethod
    def from_function(cls, func, grid: Sequence[int] | int) -> "FourierMap":
        """Sample ``func(theta)`` on the uniform grid; theta has shape (*grid, l)."""
        grid = _as_grid(grid)
        return cls.from_grid(func(torus_grid(grid)), len(grid))

    @classmethod
    def zeros(cls, grid, shape=()) -> "FourierMap":
        grid = _as_grid(grid)
        return cls(np.zeros(tuple(grid) + tuple(shape), dtype=complex), len(grid))

    @classmethod
    def constant(cls, value, grid) -> "FourierMap":
        grid = _as_grid(grid)
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros(tuple(grid) + value.shape, dtype=complex)
        coeffs[(0,) * len(grid)] = value
        return cls(coeffs, len(grid))

    # ------------------------------------------------------------------
    # basic properties
    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def l(self) -> int:
        return self._l

    @property
    def grid(self) -> tuple:
        return self._coeffs.shape[: self._l]

    @property
    def shape(self) -> tuple:
        return self._coeffs.shape[self._l :]

    @property
    def order(self) -> tuple:
        """Largest retained |k_j| per axis."""
        return tuple(n // 2 - 1 if n > 1 else 0 for n in self.grid)

    def __repr__(self):
        return f"FourierMap(l={self.l}, grid={self.grid}, shape={self.shape})"

    def to_grid(self) -> np.ndarray:
        """Real samples on the uniform grid, shape (*grid, *shape)."""
        axes = tuple(range(self._l))
        vals = np.fft.ifftn(self._coeffs * np.prod(self.grid), axes=axes)
        return vals.real

    def imag_residue(self) -> float:
        """Largest imaginary part of the grid evaluation (roundoff check)."""
        axes = tuple(range(self._l))
        vals = np.fft.ifftn(self._coeffs * np.prod(self.grid), axes=axes)
        return float(np.max(np.abs(vals.imag), initial=0.0))

    def __call__(self, theta) -> np.ndarray:
        """Evaluate the series at arbitrary points theta of shape (..., l)."""
        theta = np.asarray(theta, dtype=float)
        if self._l == 1 and theta.ndim == 0:
            theta = theta.reshape(1)
        pts = theta.reshape(-1, self._l)
        ks = np.stack([k.ravel() for k in _mode_mesh(self.grid)], axis=-1)
        phase = np.exp(2j * np.pi * pts @ ks.T)
        flat = self._coeffs.reshape((-1,) + self.shape)
        vals = np.tensordot(phase, flat, axes=(1, 0)).real
        return vals.reshape(theta.shape[:-1] + self.shape)

    # ------------------------------------------------------------------
    # linear structure
    def _like(self, coeffs) -> "FourierMap":
        return FourierMap(coeffs, self._l)

    def _check(self, other):
        if not isinstance(other, FourierMap):
            return NotImplemented
        if other.grid != self.grid:
            raise GridError(f"grid mismatch {self.grid} vs {other.grid}")
        return other

    def __add__(self, other):
        if isinstance(other, FourierMap):
            self._check(other)
            return self._like(self._coeffs + other._coeffs)
        value = np.asarray(other, dtype=float)
        out = np.array(self._coeffs)
        out[(0,) * self._l] = out[(0,) * self._l] + value
        return self._like(out)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self._coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, FourierMap):
            return self.pointwise(scalar, np.multiply)
        return self._like(self._coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._like(self._coeffs / scalar)

    def __getitem__(self, index) -> "FourierMap":
        """Index into the value axes."""
        if not isinstance(index, tuple):
            index = (index,)
        full = (slice(None),) * self._l + index
        return self._like(self._coeffs[full])

    @property
    def T(self) -> "FourierMap":
        """Swap the last two value axes (matrix transpose)."""
        return self._like(np.swapaxes(self._coeffs, -1, -2))

    def pointwise(self, other, op) -> "FourierMap":
        """Apply a binary grid operation; the product is re-interpolated."""
        self._check(other)
        return FourierMap.from_grid(op(self.to_grid(), other.to_grid()), self._l)

    def __matmul__(self, other) -> "FourierMap":
        if isinstance(other, FourierMap):
            if len(other.shape) == 1:
                return self.pointwise(other, lambda a, b: np.einsum("...ij,...j->...i", a, b))
            return self.pointwise(other, np.matmul)
        return FourierMap.from_grid(self.to_grid() @ np.asarray(other), self._l)

    def apply(self, func) -> "FourierMap":
        return FourierMap.from_grid(func(self.to_grid()), self._l)

    # ------------------------------------------------------------------
    # spectral operators
    def _multiplier(self, mult) -> "FourierMap":
        return self._like(self._coeffs * _expand(mult, len(self.shape)))

    def dot_k(self, omega) -> np.ndarray:
        """Array of k . omega over the grid of modes."""
        omega = as_omega(omega)
        if omega.size != self._l:
            raise ValueError(f"frequency of dimension {omega.size} for a {self._l}-torus")
        mesh = _mode_mesh(self.grid)
        return sum(m * w for m, w in zip(mesh, omega))

    def shift(self, omega) -> "FourierMap":
        """Composition with the rotation T_omega: returns f(theta + omega)."""
        phase = np.exp(2j * np.pi * self.dot_k(omega))
        phase[_nyquist_mask(self.grid)] = 0.0
        return self._multiplier(phase)

    def derivative(self, axis: int = 0) -> "FourierMap":
        k = _mode_mesh(self.grid)[axis]
        return self._multiplier(2j * np.pi * k)

    def directional(self, omega) -> "FourierMap":
        """Derivative along omega: sum_i omega_i d/dtheta_i."""
        return self._multiplier(2j * np.pi * self.dot_k(omega))

    def jacobian(self) -> "FourierMap":
        """Stack derivatives along a trailing axis: value shape (*shape, l)."""
        parts = [self.derivative(j)._coeffs for j in range(self._l)]
        return self._like(np.stack(parts, axis=-1))

    # ------------------------------------------------------------------
    # norms
    def average(self) -> np.ndarray:
        return self._coeffs[(0,) * self._l].real.copy()

    def abs_l1(self, rho: float = 0.0) -> np.ndarray:
        """Per-component weighted l1 sums of the coefficients."""
        if rho < 0:
            raise ValueError("rho must be non-negative")
        mesh = _mode_mesh(self.grid)
        weight = np.exp(2 * np.pi * rho * sum(np.abs(m) for m in mesh))
        weight = _expand(weight, len(self.shape))
        axes = tuple(range(self._l))
        return np.sum(np.abs(self._coeffs) * weight, axis=axes)

    def norm(self, rho: float = 0.0) -> StripNorm:
        """Upper bound of the sup norm on the complex strip of half-width rho.

        Vectors use the max over components, matrices the max row sum.
        """
        sums = self.abs_l1(rho)
        return StripNorm(float(rho), _sup_norm(sums))

    def sup_grid(self) -> float:
        """Max over grid points of the sup norm of the value."""
        vals = self.to_grid()
        if len(self.shape) <= 1:
            return float(np.max(np.abs(vals)))
        return float(np.max(np.sum(np.abs(vals), axis=-1)))

    # ------------------------------------------------------------------
    # resolution changes
    def resize(self, grid) -> "FourierMap":
        """Zero-pad or cut the coefficient box to a new grid."""
        grid = _as_grid(grid)
        if len(grid) != self._l:
            raise GridError("grid dimension mismatch")
        out = np.zeros(tuple(grid) + self.shape, dtype=complex)
        keep = [min(a, b) // 2 for a, b in zip(grid, self.grid)]
        src = np.ix_(*[_kept_indices(n, kk) for n, kk in zip(self.grid, keep)])
        dst = np.ix_(*[_kept_indices(n, kk) for n, kk in zip(grid, keep)])
        out[dst] = self._coeffs[src]
        out[_nyquist_mask(grid)] = 0.0
        return FourierMap(out, self._l)

    def pad_dealias(self, factor: int = 2) -> "FourierMap":
        if factor < 1:
            raise ValueError("padding factor must be >= 1")
        return self.resize(tuple(n * int(factor) for n in self.grid))

    def truncate(self, order) -> tuple["FourierMap", float]:
        """Keep modes with |k_j| <= order_j; returns (map, discarded tail mass).

        The grid shrinks to the smallest power of two holding the kept modes.
        Tail mass is the max over components of the dropped l1 coefficient sum.
        """
        order = np.broadcast_to(np.asarray(order, dtype=int), (self._l,))
        mesh = _mode_mesh(self.grid)
        keep = np.ones(self.grid, dtype=bool)
        for m, o in zip(mesh, order):
            keep &= np.abs(m) <= o
        dropped = np.where(_expand(~keep, len(self.shape)), np.abs(self._coeffs), 0.0)
        tail = float(np.max(np.sum(dropped, axis=tuple(range(self._l))), initial=0.0))
        new_grid = tuple(max(1, _next_pow2(2 * int(o) + 2)) for o in order)
        new_grid = tuple(min(a, b) for a, b in zip(new_grid, self.grid))
        kept = FourierMap(np.where(_expand(keep, len(self.shape)), self._coeffs, 0.0), self._l)
        return kept.resize(new_grid), tail

    def tail_mass(self, order) -> float:
        return self.truncate(order)[1]

    def threshold(self, tol: float) -> "FourierMap":
        """Zero out coefficients with modulus below tol (mean mode kept)."""
        if tol <= 0:
            return self
        out = np.where(np.abs(self._coeffs) < tol, 0.0, self._coeffs)
        out[(0,) * self._l] = self._coeffs[(0,) * self._l]
        return self._like(out)

    def allclose(self, other: "FourierMap", atol=1e-13) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self._coeffs - other._coeffs), initial=0.0) <= atol)


def _sup_norm(sums) -> float:
    sums = np.asarray(sums)
    if sums.ndim == 0:
        return float(sums)
    if sums.ndim == 1:
        return float(np.max(sums, initial=0.0))
    return float(np.max(np.sum(sums.reshape(-1, sums.shape[-1]), axis=-1), initial=0.0))


def _hermitian(coeffs, l):
    rev = coeffs
    for axis in range(l):
        rev = np.roll(np.flip(rev, axis=axis), 1, axis=axis)
    return 0.5 * (coeffs + np.conj(rev))


def _kept_indices(n, half):
    """FFT-order indices of modes |k| < half for a length-n axis."""
    if n == 1:
        return np.array([0])
    pos = np.arange(0, half)
    neg = np.arange(n - half + 1, n) if half > 1 else np.array([], dtype=int)
    return np.concatenate([pos, neg]).astype(int)


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


def _as_grid(grid) -> tuple:
    if isinstance(grid, (int, np.integer)):
        return (int(grid),)
    return tuple(int(n) for n in grid)


def torus_grid(grid) -> np.ndarray:
    """Uniform points of T^l, shape (*grid, l)."""
    grid = _as_grid(grid)
    axes = [np.arange(n) / n for n in grid]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def grid_shift(values: np.ndarray, omega, l: int = 1) -> np.ndarray:
    """Shift grid samples by omega through their trigonometric interpolant."""
    return FourierMap.from_grid(values, l).shift(omega).to_grid()


def stack(maps: Iterable[FourierMap], axis: int = -1) -> FourierMap:
    maps = list(maps)
    l = maps[0].l
    nval = len(maps[0].shape)
    ax = axis if axis >= 0 else l + nval + 1 + axis
    return FourierMap(np.stack([m.coeffs for m in maps], axis=ax), l)
