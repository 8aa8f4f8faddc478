"""Invariant splittings of linear cocycles over a rotation.

The cocycle is ``theta -> A(theta) = DF(K(theta))`` acting fibre-wise over
``T_omega``.  A :class:`Splitting` holds smooth bases of the stable, center and
unstable bundles together with the projections they induce.  Approximate
splittings are refined by the graph transform in two passes (stable against
center-unstable, then stable-center against unstable), and the linearized
equations restricted to the hyperbolic bundles are solved by their
convergent series.

All arrays carry a single flattened grid axis first.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import HyperbolicityError, HyperbolicityWarning, SplittingDivergedError
from .fourier import FourierMap, as_omega

SPLIT_TOL = 1e-10
PICARD_TOL = 1e-12
PICARD_MAX = 200
N_WINDOW = 16
SERIES_TOL = 1e-15
SERIES_CAP = 10_000


def _tr(a):
    return np.swapaxes(a, -1, -2)


def shift_grid(arr: np.ndarray, grid, omega) -> np.ndarray:
    """Evaluate grid samples (flattened grid axis) at theta + omega."""
    if arr.size == 0:
        return arr
    grid = tuple(grid)
    f = FourierMap.from_grid(arr.reshape(grid + arr.shape[1:]), len(grid))
    return f.shift(omega).to_grid().reshape(arr.shape)


@dataclass(frozen=True)
class Cocycle:
    """Matrices A(theta) on the grid, over the rotation by omega."""

    matrices: np.ndarray
    grid: tuple
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrices", np.asarray(self.matrices, dtype=float))
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "omega", as_omega(self.omega))

    @property
    def dim(self):
        return self.matrices.shape[-1]

    def shift(self, arr, steps=1.0):
        return shift_grid(arr, self.grid, steps * self.omega)

    def at(self, steps):
        """A(theta + steps * omega)."""
        if steps == 0:
            return self.matrices
        return self.shift(self.matrices, steps)


@dataclass(frozen=True)
class Splitting:
    """Bases and projections of E^s + E^c + E^u over the grid."""

    grid: tuple
    Bs: np.ndarray
    Bc: np.ndarray
    Bu: np.ndarray
    proj_s: np.ndarray
    proj_c: np.ndarray
    proj_u: np.ndarray

    @classmethod
    def from_bases(cls, grid, Bs, Bc, Bu) -> "Splitting":
        Bs, Bc, Bu = (np.asarray(b, dtype=float) for b in (Bs, Bc, Bu))
        T = np.concatenate([Bs, Bc, Bu], axis=-1)
        if T.shape[-1] != T.shape[-2]:
            raise ValueError(f"bundle dimensions {Bs.shape[-1]}+{Bc.shape[-1]}+{Bu.shape[-1]} != {T.shape[-2]}")
        Tinv = np.linalg.inv(T)
        ds, dc = Bs.shape[-1], Bc.shape[-1]
        Ps = T[..., :ds] @ Tinv[:, :ds, :]
        Pc = T[..., ds : ds + dc] @ Tinv[:, ds : ds + dc, :]
        Pu = T[..., ds + dc :] @ Tinv[:, ds + dc :, :]
        return cls(tuple(grid), Bs, Bc, Bu, Ps, Pc, Pu)

    @classmethod
    def constant(cls, grid, Bs, Bc, Bu) -> "Splitting":
        n = int(np.prod(grid))
        rep = lambda b: np.broadcast_to(np.asarray(b, dtype=float), (n,) + np.shape(b)).copy()
        return cls.from_bases(grid, rep(Bs), rep(Bc), rep(Bu))

    @property
    def dims(self):
        return (self.Bs.shape[-1], self.Bc.shape[-1], self.Bu.shape[-1])

    def projection(self, which: str) -> FourierMap:
        arr = {"s": self.proj_s, "c": self.proj_c, "u": self.proj_u}[which]
        return FourierMap.from_grid(arr.reshape(self.grid + arr.shape[1:]), len(self.grid))

    def shifted(self, which: str, omega) -> np.ndarray:
        arr = {"s": self.proj_s, "c": self.proj_c, "u": self.proj_u}[which]
        return shift_grid(arr, self.grid, omega)

    def defects(self) -> dict:
        """Deviation from a resolution of the identity by complementary projections."""
        eye = np.eye(self.proj_s.shape[-1])
        P = {"s": self.proj_s, "c": self.proj_c, "u": self.proj_u}
        out = {"sum": float(np.max(np.abs(P["s"] + P["c"] + P["u"] - eye)))}
        worst = 0.0
        for a in "scu":
            for b in "scu":
                target = P[a] if a == b else 0.0
                worst = max(worst, float(np.max(np.abs(P[a] @ P[b] - target))))
        out["idempotent"] = worst
        out["ranks"] = tuple(
            sorted(set(int(r) for r in np.linalg.matrix_rank(P[a], tol=1e-8))) for a in "scu"
        )
        return out


@dataclass(frozen=True)
class RateEstimates:
    mu1: float
    mu2: float
    mu3: float
    C_h: float
    N_window: int

    def certified(self) -> bool:
        return (
            self.mu1 < 1 and self.mu2 < 1 and self.mu3 >= 1
            and self.mu1 * self.mu3 < 1 and self.mu2 * self.mu3 < 1
        )


# ----------------------------------------------------------------------------
# graph transform


def _split_coordinates(cocycle: Cocycle, B1, B2):
    T = np.concatenate([B1, B2], axis=-1)
    Ts = cocycle.shift(T)
    a = np.linalg.solve(Ts, cocycle.matrices @ T)
    k1 = B1.shape[-1]
    return a[:, :k1, :k1], a[:, :k1, k1:], a[:, k1:, :k1], a[:, k1:, k1:]


def _picard(step, u0, tol, max_iter, what):
    u = u0
    history = []
    for it in range(max_iter):
        new = step(u)
        diff = float(np.max(np.abs(new - u), initial=0.0))
        history.append(diff)
        u = new
        if not np.isfinite(diff):
            break
        if diff < tol:
            return u, it + 1
    raise SplittingDivergedError(
        f"graph transform for {what} did not converge in {max_iter} iterations "
        f"(last increment {history[-1] if history else float('nan'):.3e})"
    )


def graph_first(cocycle: Cocycle, B1, B2, tol=PICARD_TOL, max_iter=PICARD_MAX):
    """Invariant bundle near span(B1) for a splitting where B1 is dominated.

    Fixed point of u(theta) = a22^-1 (u(theta+w)(a11 + a12 u) - a21); returns
    the new basis B1 + B2 u and the iteration count.
    """
    k1, k2 = B1.shape[-1], B2.shape[-1]
    if k1 == 0 or k2 == 0:
        return B1, 0
    a11, a12, a21, a22 = _split_coordinates(cocycle, B1, B2)

    def step(u):
        return np.linalg.solve(a22, cocycle.shift(u) @ (a11 + a12 @ u) - a21)

    u, its = _picard(step, np.zeros((B1.shape[0], k2, k1)), tol, max_iter, "the dominated bundle")
    return B1 + B2 @ u, its


def graph_second(cocycle: Cocycle, B1, B2, tol=PICARD_TOL, max_iter=PICARD_MAX):
    """Invariant bundle near span(B2) for a splitting where B2 dominates.

    Fixed point of u(theta) = [(a11 u + a12)(a22 + a21 u)^-1](theta - w);
    returns B2 + B1 u and the iteration count.
    """
    k1, k2 = B1.shape[-1], B2.shape[-1]
    if k1 == 0 or k2 == 0:
        return B2, 0
    a11, a12, a21, a22 = _split_coordinates(cocycle, B1, B2)

    def step(u):
        g = _tr(np.linalg.solve(_tr(a22 + a21 @ u), _tr(a11 @ u + a12)))
        return cocycle.shift(g, -1.0)

    u, its = _picard(step, np.zeros((B1.shape[0], k1, k2)), tol, max_iter, "the dominating bundle")
    return B2 + B1 @ u, its


def refine_splitting(cocycle: Cocycle, approx: Splitting, tol=PICARD_TOL, max_iter=PICARD_MAX) -> Splitting:
    """Invariant splitting near ``approx`` by the two-pass graph transform."""
    Bs, Bc, Bu = approx.Bs, approx.Bc, approx.Bu
    Bcu = np.concatenate([Bc, Bu], axis=-1)
    Bsc = np.concatenate([Bs, Bc], axis=-1)
    # pass 1: E^s against E^c + E^u
    Bs_new, _ = graph_first(cocycle, Bs, Bcu, tol, max_iter)
    Bcu_new, _ = graph_second(cocycle, Bs, Bcu, tol, max_iter)
    # pass 2: E^s + E^c against E^u
    Bsc_new, _ = graph_first(cocycle, Bsc, Bu, tol, max_iter)
    Bu_new, _ = graph_second(cocycle, Bsc, Bu, tol, max_iter)
    m = Bs.shape[-2]
    eye = np.eye(m)
    ds, du = Bs.shape[-1], Bu.shape[-1]
    if ds:
        Ts = np.concatenate([Bs_new, Bcu_new], axis=-1)
        Ps = Bs_new @ np.linalg.inv(Ts)[:, :ds, :]
    else:
        Ps = np.zeros((Bs.shape[0], m, m))
    if du:
        Tu = np.concatenate([Bsc_new, Bu_new], axis=-1)
        Pu = Bu_new @ np.linalg.inv(Tu)[:, m - du :, :]
    else:
        Pu = np.zeros((Bs.shape[0], m, m))
    Bc_new = (eye - Ps - Pu) @ Bc
    return Splitting.from_bases(approx.grid, Bs_new, Bc_new, Bu_new)


def invariance_residual(cocycle: Cocycle, split: Splitting) -> float:
    """max over bundles of |Pi(theta + w) A(theta) - A(theta) Pi(theta)|."""
    A = cocycle.matrices
    worst = 0.0
    for which in "scu":
        P = {"s": split.proj_s, "c": split.proj_c, "u": split.proj_u}[which]
        Ps = cocycle.shift(P)
        worst = max(worst, float(np.max(np.abs(Ps @ A - A @ P))))
    return worst


# ----------------------------------------------------------------------------
# subspace geometry


def _orth(B):
    q, _ = np.linalg.qr(B)
    return q


def subspace_distance(B1, B2) -> float:
    """Grid sup of the sine of the largest principal angle between ranges."""
    if B1.shape[-1] == 0 and B2.shape[-1] == 0:
        return 0.0
    Q1, Q2 = _orth(B1), _orth(B2)
    if Q2.shape[-1] > Q1.shape[-1]:
        Q1, Q2 = Q2, Q1
    resid = Q2 - Q1 @ (_tr(Q1) @ Q2)
    return float(np.max(np.linalg.norm(resid, ord=2, axis=(-2, -1))))


def principal_angle(B1, B2) -> float:
    return float(np.arcsin(min(1.0, subspace_distance(B1, B2))))


# ----------------------------------------------------------------------------
# growth rates


def _op_norm_inf(M):
    return np.max(np.sum(np.abs(M), axis=-1), axis=-1)


def _fit(growth):
    """(mu, C) with growth[n-1] <= C mu^n for n = 1..N from a window of norms."""
    g = np.maximum(np.asarray(growth, dtype=float), np.finfo(float).tiny)
    N = g.size
    half = N // 2
    mu = (g[N - 1] / g[half - 1]) ** (1.0 / (N - half))
    n = np.arange(1, N + 1)
    C = float(np.max(g / mu**n))
    return float(mu), C


def window_growth(cocycle: Cocycle, proj: np.ndarray, N: int, backward=False):
    """Grid sup of the operator norm of n-step products restricted by proj."""
    M = proj
    A = cocycle.matrices
    out = []
    step = cocycle.at(-1) if backward else A
    if backward:
        step = np.linalg.inv(step)
    for n in range(1, N + 1):
        if backward:
            M = cocycle.shift(step, -(n - 1)) @ M
        else:
            M = cocycle.shift(step, n - 1) @ M
        out.append(float(np.max(_op_norm_inf(M))))
    return np.array(out)


def estimate_rates(cocycle: Cocycle, split: Splitting, N_window: int = N_WINDOW) -> RateEstimates:
    """Fit (mu, C_h) to n-step growth over the window, per bundle."""
    if N_window < 2:
        raise ValueError("N_window must be >= 2")
    ds, dc, du = split.dims
    mus, Cs = {}, []
    if ds:
        mus["s"], C = _fit(window_growth(cocycle, split.proj_s, N_window))
        Cs.append(C)
    else:
        mus["s"] = 0.0
    if du:
        mus["u"], C = _fit(window_growth(cocycle, split.proj_u, N_window, backward=True))
        Cs.append(C)
    else:
        mus["u"] = 0.0
    if dc:
        f, Cf = _fit(window_growth(cocycle, split.proj_c, N_window))
        b, Cb = _fit(window_growth(cocycle, split.proj_c, N_window, backward=True))
        mus["c"] = max(f, b, 1.0)
        Cs += [Cf, Cb]
    else:
        mus["c"] = 1.0
    rates = RateEstimates(mus["s"], mus["u"], mus["c"], max(Cs) if Cs else 1.0, int(N_window))
    if not rates.certified():
        warnings.warn(f"window rates violate the dichotomy inequalities: {rates}", HyperbolicityWarning, stacklevel=2)
    return rates


# ----------------------------------------------------------------------------
# hyperbolic solves


def _series_terms(mu, C_h, size, series_tol):
    if size <= 0:
        return 1
    if mu <= 0:
        return 2
    k = math.ceil(math.log(series_tol / (C_h * size)) / math.log(mu)) if C_h * size > series_tol else 1
    return int(min(max(k, 1) + 2, SERIES_CAP))


def _as_grid(E, grid):
    if isinstance(E, FourierMap):
        return E.to_grid().reshape((-1,) + E.shape)
    return np.asarray(E, dtype=float)


def solve_stable(cocycle: Cocycle, split: Splitting, Etilde, rates: Optional[RateEstimates] = None,
                 series_tol: float = SERIES_TOL) -> FourierMap:
    """Delta with A(theta - w) Delta(theta - w) - Delta(theta) = -Etilde(theta) in E^s.

    Summed as the convergent series Delta = sum_k A_{-1} ... A_{-k} Etilde(theta - k w),
    each partial sum projected onto E^s so roundoff never feeds the unstable bundle.
    """
    return _solve_hyperbolic(cocycle, split, Etilde, rates, series_tol, stable=True)


def solve_unstable(cocycle: Cocycle, split: Splitting, Etilde, rates: Optional[RateEstimates] = None,
                   series_tol: float = SERIES_TOL) -> FourierMap:
    """Same equation on E^u, summed backward with A^-1."""
    return _solve_hyperbolic(cocycle, split, Etilde, rates, series_tol, stable=False)


def _solve_hyperbolic(cocycle, split, Etilde, rates, series_tol, stable):
    grid = split.grid
    E = _as_grid(Etilde, grid)
    P = split.proj_s if stable else split.proj_u
    if rates is None:
        rates = estimate_rates(cocycle, split)
    mu = rates.mu1 if stable else rates.mu2
    dim = split.dims[0] if stable else split.dims[2]
    if dim and not mu < 1:
        raise HyperbolicityError(f"{'stable' if stable else 'unstable'} rate {mu:.4f} is not contractive ({rates})")
    E = np.einsum("nij,nj->ni", P, E)
    size = float(np.max(np.abs(E), initial=0.0))
    if dim == 0 or size == 0.0:
        return FourierMap.from_grid(np.zeros(grid + E.shape[1:]), len(grid))
    kmax = _series_terms(mu, rates.C_h, size, series_tol)
    A = cocycle.matrices
    if stable:
        def step(D):
            return E + cocycle.shift(np.einsum("nij,nj->ni", A, D), -1.0)
    else:
        Ainv = np.linalg.inv(A)

        def step(D):
            return np.einsum("nij,nj->ni", Ainv, cocycle.shift(D - E, 1.0))

    D = E if stable else -np.einsum("nij,nj->ni", Ainv, cocycle.shift(E, 1.0))
    D = np.einsum("nij,nj->ni", P, D)
    for _ in range(kmax):
        new = np.einsum("nij,nj->ni", P, step(D))
        diff = float(np.max(np.abs(new - D)))
        D = new
        if diff <= series_tol * max(1.0, size):
            break
    return FourierMap.from_grid(D.reshape(grid + D.shape[1:]), len(grid))


def hyperbolic_residual(cocycle: Cocycle, Delta: FourierMap, Etilde) -> float:
    """Grid sup of A(theta - w) Delta(theta - w) - Delta(theta) + Etilde(theta)."""
    grid = cocycle.grid
    D = _as_grid(Delta, grid)
    E = _as_grid(Etilde, grid)
    lhs = cocycle.shift(np.einsum("nij,nj->ni", cocycle.matrices, D), -1.0) - D + E
    return float(np.max(np.abs(lhs)))
