"""Symplectic structure, embeddings, and the geometric frames of the Newton step.

Conventions: points are row vectors of length 2d; batched matrices have the
grid (or point) axes first.  The symplectic form is ``Omega(a, b) = a . J(z) b``.
Bundled models use ``Omega = dx^dy + du^dv`` on ``(x, y, u, v)``, that is
``J = blockdiag([[0, 1], [-1, 0]], [[0, 1], [-1, 0]])`` and ``X_H = J grad H``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DomainEscapeError,
    EmbeddingDegeneracyError,
    ExactnessWarning,
    GeometryDegenerateError,
    TwistDegeneracyError,
)
from .fourier import FourierMap, as_omega, torus_grid

COND_MAX = 1e8
ISOTROPY_TOL = 1e-8
NEUMANN_TOL = 1e-15
NEUMANN_TERMS = 60


def pair_J(d: int) -> np.ndarray:
    """J for ``Omega = sum dq_i ^ dp_i`` with coordinates ordered (q1, p1, q2, p2, ...)."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(d), block)


@dataclass(frozen=True)
class SymplecticSystem:
    """A map F with derivative DF and symplectic matrix J.

    ``evaluate(z, jac)`` returns ``(F(z), DF(z) or None)`` for points of shape
    (n, 2d).  ``J`` is either a constant (2d, 2d) array or a callable of the
    points returning (n, 2d, 2d).  ``angles`` flags angle coordinates; the
    domain box ``lower``/``upper`` applies to the others.
    """

    dim: int
    evaluate: Callable
    J: object
    exact: bool = True
    angles: tuple = ()
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    name: str = "system"
    params: dict = field(default_factory=dict)

    def map(self, z):
        return self.evaluate(np.atleast_2d(z), False)[0]

    def jacobian(self, z):
        return self.evaluate(np.atleast_2d(z), True)[1]

    def J_at(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        if callable(self.J):
            return np.asarray(self.J(z))
        return np.broadcast_to(np.asarray(self.J, dtype=float), (z.shape[0], self.dim, self.dim))

    def in_domain(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        ok = np.all(np.isfinite(z), axis=1)
        if self.lower is None and self.upper is None:
            return ok
        mask = np.array([i not in self.angles for i in range(self.dim)])
        if self.lower is not None:
            ok &= np.all((z >= self.lower) | ~mask, axis=1)
        if self.upper is not None:
            ok &= np.all((z <= self.upper) | ~mask, axis=1)
        return ok

    def check_domain(self, z, what="embedding"):
        ok = self.in_domain(z)
        if not np.all(ok):
            i = int(np.argmin(ok))
            raise DomainEscapeError(f"{what} left the domain of {self.name} at point {np.atleast_2d(z)[i]}")


def symplecticity_defect(sys: SymplecticSystem, points) -> float:
    """max |DF^T J(F) DF - J| over the sampled points."""
    points = np.atleast_2d(points)
    Fz, DF = sys.evaluate(points, True)
    lhs = np.swapaxes(DF, -1, -2) @ sys.J_at(Fz) @ DF
    return float(np.max(np.abs(lhs - sys.J_at(points))))


def check_J(sys: SymplecticSystem, points, tol=1e-12) -> bool:
    """J antisymmetric and invertible at the sampled points."""
    Jz = sys.J_at(points)
    anti = np.max(np.abs(Jz + np.swapaxes(Jz, -1, -2))) < tol
    return bool(anti and np.all(np.abs(np.linalg.det(Jz)) > tol))


# ----------------------------------------------------------------------------
# embeddings


@dataclass(frozen=True)
class Embedding:
    """K(theta) = lift @ theta + periodic(theta)."""

    periodic: FourierMap
    lift: np.ndarray

    def __post_init__(self):
        lift = np.asarray(self.lift, dtype=float)
        if lift.shape != (self.periodic.shape[0], self.periodic.l):
            raise ValueError(f"lift shape {lift.shape} incompatible with {self.periodic!r}")
        object.__setattr__(self, "lift", lift)

    @property
    def l(self):
        return self.periodic.l

    @property
    def dim(self):
        return self.periodic.shape[0]

    @property
    def grid(self):
        return self.periodic.grid

    def values(self, pad: int = 1) -> np.ndarray:
        """Samples on the (optionally padded) grid, shape (*grid, 2d)."""
        per = self.periodic if pad == 1 else self.periodic.pad_dealias(pad)
        theta = torus_grid(per.grid)
        return per.to_grid() + theta @ self.lift.T

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.l == 1 and theta.ndim <= 1:
            theta = theta.reshape(-1, 1)
        return self.periodic(theta) + theta @ self.lift.T

    def derivative(self) -> FourierMap:
        """DK as a (2d, l) matrix-valued map."""
        return self.periodic.jacobian() + self.lift

    def shift(self, omega) -> "Embedding":
        om = as_omega(omega)
        return Embedding(self.periodic.shift(om) + self.lift @ om, self.lift)

    def __add__(self, delta: FourierMap) -> "Embedding":
        return Embedding(self.periodic + delta, self.lift)

    def resize(self, grid) -> "Embedding":
        return Embedding(self.periodic.resize(grid), self.lift)


def flat(values: np.ndarray, l: int) -> np.ndarray:
    """Collapse the grid axes of an array into one leading axis."""
    return values.reshape((-1,) + values.shape[l:])


def unflat(values: np.ndarray, grid) -> np.ndarray:
    return values.reshape(tuple(grid) + values.shape[1:])


def evaluate_on(K: Embedding, sys: SymplecticSystem, jac=True, check=True):
    """F(K), DF(K), J(K) on the grid of K (flattened grid axis)."""
    z = flat(K.values(), K.l)
    if check:
        sys.check_domain(z)
    Fz, DF = sys.evaluate(z, jac)
    return z, Fz, DF, sys.J_at(z)


# ----------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class GeometricFrames:
    """Grid samples (flattened) of DK, N, P, L and Mtilde = [DK, C].

    C is the symplectic conjugate J^-1 DK N, projected onto the center bundle
    when a center projection is supplied.  J^-1 only preserves the center when
    the invariant splitting is orthogonal, so the projection is what keeps
    range(Mtilde) invariant on whiskered tori in general.
    """

    grid: tuple
    DK: np.ndarray
    N: np.ndarray
    P: np.ndarray
    L: np.ndarray
    Mtilde: np.ndarray
    J: np.ndarray
    Jinv: np.ndarray

    @property
    def l(self):
        return self.DK.shape[-1]

    def fourier(self, name: str) -> FourierMap:
        arr = getattr(self, name)
        return FourierMap.from_grid(unflat(arr, self.grid), len(self.grid))

    def shifted(self, name: str, omega) -> np.ndarray:
        """Grid samples of the named frame evaluated at theta + omega."""
        return flat(self.fourier(name).shift(omega).to_grid(), len(self.grid))


def _tr(a):
    return np.swapaxes(a, -1, -2)


def frames(K: Embedding, sys: SymplecticSystem, proj_c: Optional[np.ndarray] = None,
           rank_tol: float = 1e-12) -> GeometricFrames:
    z = flat(K.values(), K.l)
    DK = flat(K.derivative().to_grid(), K.l)
    gram = _tr(DK) @ DK
    eig = np.linalg.eigvalsh(gram)
    scale = max(1.0, float(np.max(eig)))
    if np.min(eig) <= rank_tol * scale:
        i = int(np.argmin(np.min(eig, axis=-1)))
        raise EmbeddingDegeneracyError(f"DK^T DK singular at grid point {i} (min eigenvalue {np.min(eig):.2e})")
    N = np.linalg.inv(gram)
    N = 0.5 * (N + _tr(N))
    P = DK @ N
    Jz = sys.J_at(z)
    Jinv = np.linalg.inv(Jz)
    L = _tr(DK) @ Jz @ DK
    C = Jinv @ DK @ N
    if proj_c is not None:
        C = proj_c @ C
    Mt = np.concatenate([DK, C], axis=-1)
    return GeometricFrames(tuple(K.grid), DK, N, P, L, Mt, Jz, Jinv)


def _avg(arr):
    return np.mean(arr, axis=0)


def _check_avg(avg, what, cond_max):
    cond = np.linalg.cond(avg) if avg.size else 1.0
    if not np.isfinite(cond) or cond > cond_max:
        raise TwistDegeneracyError(f"avg({what}) is singular (condition number {cond:.3e})")
    return float(cond)


def frame_G(K0: Embedding, sys: SymplecticSystem, omega) -> FourierMap:
    """The frozen translation frame G = [J(K0)^-1 DK0] o T_omega."""
    fr = frames(K0, sys)
    G = FourierMap.from_grid(unflat(fr.Jinv @ fr.DK, fr.grid), K0.l)
    return G.shift(omega)


def twist_Q(K: Embedding, sys: SymplecticSystem, G: FourierMap, omega, cond_max=COND_MAX, fr=None):
    """Q(theta) = DK(theta+omega)^T J(K(theta+omega)) G(theta); returns (Q, avg Q)."""
    fr = fr or frames(K, sys)
    DKs = fr.shifted("DK", omega)
    Js = fr.shifted("J", omega)
    Gg = flat(G.to_grid(), G.l)
    Q = _tr(DKs) @ Js @ Gg
    avgQ = _avg(Q)
    _check_avg(avgQ, "Q", cond_max)
    return FourierMap.from_grid(unflat(Q, fr.grid), K.l), avgQ


def twist_A_grid(K: Embedding, sys: SymplecticSystem, omega, fr=None, DF=None):
    """Grid samples of A(theta) = P(theta+w)^T [DF(K) C - C(theta+w)], C the conjugate frame."""
    fr = fr or frames(K, sys)
    if DF is None:
        DF = evaluate_on(K, sys)[2]
    l = fr.l
    C = fr.Mtilde[..., l:]
    C_s = flat(FourierMap.from_grid(unflat(C, fr.grid), K.l).shift(omega).to_grid(), K.l)
    P_s = fr.shifted("P", omega)
    return _tr(P_s) @ (DF @ C - C_s)


def twist_A(K: Embedding, sys: SymplecticSystem, omega, cond_max=COND_MAX, fr=None):
    """Returns (A, avg A); raises TwistDegeneracyError if avg A is singular."""
    A = twist_A_grid(K, sys, omega, fr)
    avgA = _avg(A)
    _check_avg(avgA, "A", cond_max)
    return FourierMap.from_grid(unflat(A, K.grid), K.l), avgA


def flow_twist_S(K: Embedding, field_jac: Callable, J, omega, cond_max=COND_MAX):
    """S(theta) = N DK^T [d_omega(J^-1 DK N) - A J^-1 DK N], A = DX(K).

    ``field_jac(z)`` returns DX at points of shape (n, 2d); ``J`` is a constant
    matrix.  Returns (S, avg S).
    """
    z = flat(K.values(), K.l)
    DK = flat(K.derivative().to_grid(), K.l)
    N = np.linalg.inv(_tr(DK) @ DK)
    Jinv = np.linalg.inv(np.asarray(J, dtype=float))
    C = Jinv @ DK @ N
    dC = flat(FourierMap.from_grid(unflat(C, K.grid), K.l).directional(omega).to_grid(), K.l)
    A = np.asarray(field_jac(z))
    S = N @ _tr(DK) @ (dC - A @ C)
    avgS = _avg(S)
    _check_avg(avgS, "S", cond_max)
    return FourierMap.from_grid(unflat(S, K.grid), K.l), avgS


# ----------------------------------------------------------------------------
# Gram inverse


@dataclass(frozen=True)
class GramInverse:
    """Pointwise (Mtilde^T J Mtilde)^-1 = Vinv + Vtilde with Neumann diagnostics."""

    Vinv: np.ndarray
    Vtilde: np.ndarray
    radius: float
    terms: int

    @property
    def inverse(self):
        return self.Vinv + self.Vtilde

    @property
    def vtilde_norm(self):
        return float(np.max(np.sum(np.abs(self.Vtilde), axis=-1), initial=0.0))


def gram_blocks(fr: GeometricFrames):
    """V and R with Mtilde^T J Mtilde = V + R.

    V = [[0, I], [-I, X]] with X = C^T J C; R carries L in the upper-left
    block plus, for a projected conjugate, the small defect of the
    off-diagonal identity blocks.
    """
    l = fr.l
    n = fr.DK.shape[0]
    C = fr.Mtilde[..., l:]
    X = _tr(C) @ fr.J @ C
    eye = np.broadcast_to(np.eye(l), (n, l, l))
    V = np.block([[np.zeros((n, l, l)), eye], [-eye, X]])
    R = _tr(fr.Mtilde) @ fr.J @ fr.Mtilde - V
    R[:, l:, l:] = 0.0
    Vinv = np.block([[X, -eye], [eye, np.zeros((n, l, l))]])
    return V, R, Vinv


def gram_inverse(fr: GeometricFrames, tol=NEUMANN_TOL, max_terms=NEUMANN_TERMS) -> GramInverse:
    V, R, Vinv = gram_blocks(fr)
    T = -(Vinv @ R)
    radius = float(np.max(np.abs(np.linalg.eigvals(T)), initial=0.0))
    if radius >= 1.0:
        raise GeometryDegenerateError(
            f"Neumann series diverges: spectral radius of V^-1 R is {radius:.3f} >= 1"
        )
    Vt = np.zeros_like(Vinv)
    term = Vinv
    used = 0
    for used in range(1, max_terms + 1):
        term = T @ term
        Vt = Vt + term
        if np.max(np.abs(term)) < tol:
            break
    else:
        raise GeometryDegenerateError(
            f"Neumann series not converged after {max_terms} terms (spectral radius {radius:.4f})"
        )
    return GramInverse(Vinv, Vt, radius, used)


# ----------------------------------------------------------------------------
# diagnostics


def isotropy_defect(K: Embedding, sys: SymplecticSystem) -> float:
    fr = frames(K, sys)
    return float(np.max(np.abs(fr.L), initial=0.0))


def reducibility(K: Embedding, sys: SymplecticSystem, omega, proj_c: Optional[np.ndarray] = None):
    """Residuals of DF(K) Mtilde = Mtilde(theta+w) S on the grid.

    Returns a dict with the residual for S = [[I, A], [0, I]], and the
    least-squares blocks B (lower-right) and lower-left of the fitted S.
    """
    fr = frames(K, sys, proj_c)
    DF = evaluate_on(K, sys)[2]
    l = fr.l
    A = twist_A_grid(K, sys, omega, fr, DF)
    n = A.shape[0]
    S = np.zeros((n, 2 * l, 2 * l))
    S[:, :l, :l] = np.eye(l)
    S[:, l:, l:] = np.eye(l)
    S[:, :l, l:] = A
    lhs = DF @ fr.Mtilde
    Ms = fr.shifted("Mtilde", omega)
    resid = float(np.max(np.abs(lhs - Ms @ S)))
    fit = np.linalg.pinv(Ms) @ lhs
    return {
        "residual": resid,
        "B_minus_identity": float(np.max(np.abs(fit[:, l:, l:] - np.eye(l)))),
        "lower_left": float(np.max(np.abs(fit[:, l:, :l]))),
        "upper_left_minus_identity": float(np.max(np.abs(fit[:, :l, :l] - np.eye(l)))),
    }


def j_consistency(fr: GeometricFrames) -> float:
    """max |Mtilde^T J Mtilde - [[L, I], [-I, X]]| over the grid."""
    V, _, _ = gram_blocks(fr)
    gram = _tr(fr.Mtilde) @ fr.J @ fr.Mtilde
    l = fr.l
    expected = V.copy()
    expected[:, :l, :l] = fr.L
    return float(np.max(np.abs(gram - expected)))


@dataclass(frozen=True)
class VanishingCheck:
    passed: bool
    ratio: float
    lam_norm: float
    error_norm: float


def vanishing_check(lam, E_norm: float, C_van: float = 1e3, lambda_tol: Optional[float] = None,
                    exact: bool = True) -> VanishingCheck:
    """Monitor |lambda| <= C_van ||E|| (and |lambda| <= lambda_tol on converged runs)."""
    if not exact:
        raise ValueError("vanishing check only applies to exact symplectic systems")
    lam_norm = float(np.max(np.abs(np.atleast_1d(lam)), initial=0.0))
    ratio = lam_norm / E_norm if E_norm > 0 else (0.0 if lam_norm == 0 else np.inf)
    if lambda_tol is not None:
        # converged run: absolute bound
        passed = lam_norm <= lambda_tol
    else:
        passed = lam_norm <= C_van * E_norm
    if not passed:
        warnings.warn(
            f"|lambda| = {lam_norm:.3e} not controlled by ||E|| = {E_norm:.3e}; "
            "the map may not be exact symplectic or G degenerated",
            ExactnessWarning,
            stacklevel=2,
        )
    return VanishingCheck(bool(passed), float(ratio), lam_norm, float(E_norm))
