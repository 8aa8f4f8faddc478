"""Exact symplectic model systems with known limits.

Every model lives on T x R x R^2 with points (x, y, u, v), the form
``dx^dy + du^dv`` and the angle x.  Maps are compositions of exact
Hamiltonian sub-flows, so they are exact symplectic by construction.

- ``model_T``: twist x saddle, linear, every torus y = const is invariant.
- ``model_A``: kicked saddle, the nonlinear workhorse.
- ``model_B``: its autonomous Hamiltonian flow (see :mod:`whisker.flows`).
- ``model_SKEW``: skew product with a prescribed theta-dependent hyperbolic
  cocycle, optionally rotated by a theta-dependent frame.
- ``translation_map``: symplectic but not exact; has no invariant torus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .bundles import Splitting
from .cohomology import golden_mean
from .fourier import FourierMap, torus_grid
from .geometry import Embedding, SymplecticSystem, pair_J

TWO_PI = 2.0 * np.pi
STRANG_KICK = np.array([0.5, 0.5])
STRANG_DRIFT = np.array([1.0])
BOX = 0.5


@dataclass(frozen=True)
class ModelSpec:
    """A model instance: its system plus seeds for the solver."""

    family: str
    params: dict
    system: object
    omega0: float
    shear: float = 1.0
    seed_bundles: Optional[callable] = field(default=None, repr=False)

    @property
    def y0(self) -> float:
        return self.omega0 / self.shear

    def seed_torus(self, grid, phase: float = 0.0) -> Embedding:
        """Flat torus K(theta) = (theta + phase, omega0 / shear, 0, 0)."""
        grid = (int(grid),) if np.isscalar(grid) else tuple(grid)
        values = np.zeros(grid + (4,))
        values[..., 0] = phase
        values[..., 1] = self.y0
        return Embedding(FourierMap.from_grid(values, 1), np.array([[1.0], [0.0], [0.0], [0.0]]))

    def seed_splitting(self, grid) -> Splitting:
        grid = (int(grid),) if np.isscalar(grid) else tuple(grid)
        if self.seed_bundles is not None:
            theta = torus_grid(grid).reshape(-1, 1)
            Bs, Bc, Bu = self.seed_bundles(theta[:, 0])
            return Splitting.from_bases(grid, Bs, Bc, Bu)
        eye = np.eye(4)
        return Splitting.constant(grid, eye[:, [3]], eye[:, [0, 1]], eye[:, [2]])


def _box(y0):
    lower = np.array([-np.inf, y0 - BOX, -BOX, -BOX])
    upper = np.array([np.inf, y0 + BOX, BOX, BOX])
    return lower, upper


def model_T(mu: float = 2.0, omega0: Optional[float] = None) -> ModelSpec:
    """F(x, y, u, v) = (x + y, y, mu u, v / mu)."""
    if mu <= 1.0:
        raise ValueError("mu must exceed 1")
    omega0 = golden_mean() if omega0 is None else float(omega0)
    DF = np.array([[1.0, 1.0, 0, 0], [0, 1.0, 0, 0], [0, 0, mu, 0], [0, 0, 0, 1.0 / mu]])

    def evaluate(z, jac):
        out = z @ DF.T
        return out, (np.broadcast_to(DF, (z.shape[0], 4, 4)).copy() if jac else None)

    lower, upper = _box(omega0)
    sys = SymplecticSystem(4, evaluate, pair_J(2), True, (0,), lower, upper, "model_T", {"mu": mu})
    return ModelSpec("T", {"mu": mu}, sys, omega0)


def model_A(eps: float = 0.05, lam_h: float = np.log(2.0), omega0: Optional[float] = None,
            shear: float = 1.0) -> ModelSpec:
    """Strang composition of the kick H2 = eps cos(2 pi x)(1 + u) around the
    drift H1 = shear y^2/2 + lam_h u v, all with unit time."""
    omega0 = golden_mean() if omega0 is None else float(omega0)
    eps, lam_h, shear = float(eps), float(lam_h), float(shear)

    def evaluate(z, jac):
        return kernels.split_flow(z, eps, lam_h, shear, 1.0, 1, STRANG_KICK, STRANG_DRIFT, jac)

    lower, upper = _box(omega0 / shear)
    params = {"eps": eps, "lam_h": lam_h, "shear": shear}
    sys = SymplecticSystem(4, evaluate, pair_J(2), True, (0,), lower, upper, "model_A", params)
    return ModelSpec("A", params, sys, omega0, shear)


def model_B(eps: float = 0.02, lam_h: float = np.log(2.0), omega0: Optional[float] = None,
            shear: float = 1.0, h: float = 1.0 / 64, scheme: str = "yoshida4") -> ModelSpec:
    """Flow of H = shear y^2/2 + lam_h u v + eps cos(2 pi x)(1 + u)."""
    from .flows import split_hamiltonian_flow

    omega0 = golden_mean() if omega0 is None else float(omega0)
    flow = split_hamiltonian_flow(eps, lam_h, shear, h=h, scheme=scheme, y0=omega0 / shear)
    return ModelSpec("B", dict(flow.params), flow, omega0, shear)


# ----------------------------------------------------------------------------
# skew product


def _rot(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _drot(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([-s, -c], -1), np.stack([c, -s], -1)], -2)


class _Skew:
    """Darboux chart (x, y', w) -> (x, y' + phi'(x)|w|^2/2, R(phi(x)) w) and the
    normal form map in the chart: hyperbolic step with rate a(x), shear, kick."""

    def __init__(self, rate, rate_amp, wind, phase_amp, shear, eps):
        self.rate, self.rate_amp = rate, rate_amp
        self.wind, self.phase_amp = wind, phase_amp
        self.shear, self.eps = shear, eps

    def a(self, x):
        return self.rate * np.exp(self.rate_amp * np.sin(TWO_PI * x))

    def g(self, x):  # a'/a
        return TWO_PI * self.rate_amp * np.cos(TWO_PI * x)

    def dg(self, x):
        return -TWO_PI**2 * self.rate_amp * np.sin(TWO_PI * x)

    def phi(self, x):
        return TWO_PI * (self.wind * x) + self.phase_amp * np.sin(TWO_PI * x)

    def dphi(self, x):
        return TWO_PI * self.wind + TWO_PI * self.phase_amp * np.cos(TWO_PI * x)

    def ddphi(self, x):
        return -TWO_PI**2 * self.phase_amp * np.sin(TWO_PI * x)

    def chart(self, p):
        x, yp, w = p[:, 0], p[:, 1], p[:, 2:]
        z = np.einsum("nij,nj->ni", _rot(self.phi(x)), w)
        y = yp + 0.5 * self.dphi(x) * np.sum(w * w, axis=1)
        return np.column_stack([x, y, z])

    def chart_jac(self, p):
        x, w = p[:, 0], p[:, 2:]
        n = p.shape[0]
        D = np.zeros((n, 4, 4))
        D[:, 0, 0] = 1.0
        D[:, 1, 0] = 0.5 * self.ddphi(x) * np.sum(w * w, axis=1)
        D[:, 1, 1] = 1.0
        D[:, 1, 2:] = self.dphi(x)[:, None] * w
        D[:, 2:, 0] = np.einsum("nij,nj->ni", _drot(self.phi(x)), w) * self.dphi(x)[:, None]
        D[:, 2:, 2:] = _rot(self.phi(x))
        return D

    def chart_inv(self, z):
        x, y, zz = z[:, 0], z[:, 1], z[:, 2:]
        w = np.einsum("nji,nj->ni", _rot(self.phi(x)), zz)
        yp = y - 0.5 * self.dphi(x) * np.sum(zz * zz, axis=1)
        return np.column_stack([x, yp, w])

    def normal(self, p):
        """Hyperbolic step (time-1 of ln a(x) w1 w2), shear, then kick."""
        x, yp, w1, w2 = p.T
        n = p.shape[0]
        a, g, dg = self.a(x), self.g(x), self.dg(x)
        # hyperbolic step: (x, y' + g w1 w2, w1 / a, a w2)
        y1 = yp + g * w1 * w2
        u1, v1 = w1 / a, w2 * a
        H = np.zeros((n, 4, 4))
        H[:, 0, 0] = 1.0
        H[:, 1, :] = np.column_stack([dg * w1 * w2, np.ones(n), g * w2, g * w1])
        H[:, 2, 0], H[:, 2, 2] = -g * w1 / a, 1.0 / a
        H[:, 3, 0], H[:, 3, 3] = g * w2 * a, a
        # shear then kick
        x1 = x + self.shear * y1
        y2 = y1 + TWO_PI * self.eps * np.sin(TWO_PI * x1)
        S = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
        S[:, 0, 1] = self.shear
        kc = TWO_PI**2 * self.eps * np.cos(TWO_PI * x1)
        Kk = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
        Kk[:, 1, 0] = kc
        return np.column_stack([x1, y2, u1, v1]), Kk @ S @ H


def model_SKEW(omega0: Optional[float] = None, rate: float = 0.5, rate_amp: float = 0.0,
               wind: int = 0, phase_amp: float = 0.0, shear: float = 1.0, eps: float = 0.0) -> ModelSpec:
    """Skew product with hyperbolic cocycle diag(1/a, a), a(x) = rate exp(rate_amp sin 2 pi x),
    seen through the symplectic frame rotation by phi(x) = 2 pi wind x + phase_amp sin 2 pi x.

    With eps = 0 the torus (theta, omega0/shear, 0, 0) is invariant and its stable
    and unstable bundles are R(phi(theta)) e_v and R(phi(theta)) e_u.
    """
    if not 0 < rate < 1:
        raise ValueError("rate must lie in (0, 1)")
    omega0 = golden_mean() if omega0 is None else float(omega0)
    sk = _Skew(float(rate), float(rate_amp), int(wind), float(phase_amp), float(shear), float(eps))

    def evaluate(z, jac):
        p = sk.chart_inv(z)
        q, Dn = sk.normal(p)
        out = sk.chart(q)
        if not jac:
            return out, None
        return out, sk.chart_jac(q) @ Dn @ np.linalg.inv(sk.chart_jac(p))

    def bundles(theta):
        R = _rot(sk.phi(theta))
        n = theta.size
        Bs = np.zeros((n, 4, 1))
        Bu = np.zeros((n, 4, 1))
        Bs[:, 2:, 0] = R[:, :, 1]
        Bu[:, 2:, 0] = R[:, :, 0]
        Bc = np.broadcast_to(np.eye(4)[:, :2], (n, 4, 2)).copy()
        return Bs, Bc, Bu

    params = {"rate": rate, "rate_amp": rate_amp, "wind": wind, "phase_amp": phase_amp,
              "shear": shear, "eps": eps}
    lower, upper = _box(omega0 / shear)
    sys = SymplecticSystem(4, evaluate, pair_J(2), True, (0,), lower, upper, "model_SKEW", params)
    return ModelSpec("SKEW", params, sys, omega0, shear, bundles)


# ----------------------------------------------------------------------------
# small auxiliary systems


def standard_map(k: float) -> SymplecticSystem:
    """Chirikov map y' = y + k/(2 pi) sin(2 pi x), x' = x + y' on (x, y)."""

    def evaluate(z, jac):
        x, y = z[:, 0], z[:, 1]
        y1 = y + k / TWO_PI * np.sin(TWO_PI * x)
        out = np.column_stack([x + y1, y1])
        if not jac:
            return out, None
        c = k * np.cos(TWO_PI * x)
        D = np.zeros((z.shape[0], 2, 2))
        D[:, 0, 0], D[:, 0, 1] = 1 + c, 1.0
        D[:, 1, 0], D[:, 1, 1] = c, 1.0
        return out, D

    return SymplecticSystem(2, evaluate, pair_J(1), True, (0,), name="standard_map", params={"k": k})


def translation_map(c: float = 0.1) -> SymplecticSystem:
    """(x, y) -> (x + y, y + c): symplectic, not exact, no invariant circle."""
    D = np.array([[1.0, 1.0], [0.0, 1.0]])

    def evaluate(z, jac):
        out = z @ D.T + np.array([0.0, c])
        return out, (np.broadcast_to(D, (z.shape[0], 2, 2)).copy() if jac else None)

    return SymplecticSystem(2, evaluate, pair_J(1), False, (0,), name="translation", params={"c": c})


def build_model(family: str, **params) -> ModelSpec:
    """Instantiate a model by family id (T, A, B, SKEW)."""
    makers = {"T": model_T, "A": model_A, "B": model_B, "SKEW": model_SKEW}
    key = family.upper()
    if key not in makers:
        raise ValueError(f"unknown model family {family!r}; expected one of {sorted(makers)}")
    return makers[key](**params)
