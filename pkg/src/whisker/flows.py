"""Invariant tori of Hamiltonian flows by reduction to the time-1 map.

A torus invariant under the time-1 map S_1 with frequency omega is invariant
under every S_t with frequency omega t, so the map solver does the work and
the flow identity at non-integer times serves as an independent check.

Split Hamiltonians H = H1 + H2 with exactly integrable parts are integrated by
composing exact sub-flows (Strang, or triple-jump compositions of it), which
keeps the numerical flow exactly symplectic.  Other fields use RK4.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .cohomology import certify
from .errors import CohomologyDegeneracyError, IntegratorWarning
from .fourier import FourierMap, as_omega
from .geometry import COND_MAX, Embedding, SymplecticSystem, flat, flow_twist_S, pair_J, unflat
from .newton import NewtonConfig, TorusSolution, solve

DEFAULT_H = 1.0 / 64
FLOW_TIMES = (0.25, 0.5, 1.0, 2.0)


def composition(scheme: str):
    """(kick, drift) stage weights of a symmetric splitting scheme.

    ``strang`` is second order; ``yoshida4`` and ``yoshida6`` are the
    triple-jump compositions of it.
    """
    orders = {"strang": 2, "yoshida4": 4, "yoshida6": 6}
    if scheme not in orders:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(orders)}")
    drift = [1.0]
    for k in range(1, orders[scheme] // 2):
        r = 2.0 ** (1.0 / (2 * k + 1))
        w1, w0 = 1.0 / (2.0 - r), -r / (2.0 - r)
        drift = [w * d for w in (w1, w0, w1) for d in drift]
    kick = [drift[0] / 2] + [(a + b) / 2 for a, b in zip(drift, drift[1:])] + [drift[-1] / 2]
    return np.array(kick), np.array(drift)


def scheme_order(scheme: str) -> int:
    return {"strang": 2, "yoshida4": 4, "yoshida6": 6}[scheme]


@dataclass(frozen=True)
class FlowSystem:
    """A vector field X = J grad H with an integrator.

    ``flow(z, t, jac)`` returns the numerical time-t map and optionally its
    derivative, integrated with the variational equations of the same scheme.
    """

    dim: int
    vector_field: Callable
    field_jac: Callable
    flow: Callable
    J: np.ndarray
    hamiltonian: Optional[Callable] = None
    scheme: str = "rk4"
    h: float = DEFAULT_H
    exact: bool = True
    angles: tuple = ()
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    name: str = "flow"
    params: dict = field(default_factory=dict)

    def time_map(self, t: float) -> SymplecticSystem:
        def evaluate(z, jac):
            return self.flow(np.atleast_2d(z), t, jac)

        return SymplecticSystem(self.dim, evaluate, self.J, self.exact, self.angles, self.lower,
                                self.upper, f"{self.name}@t={t:g}", dict(self.params, t=t))


def time1_map(flow: FlowSystem) -> SymplecticSystem:
    return flow.time_map(1.0)


def _steps(t, h):
    n = max(1, int(np.ceil(abs(t) / h - 1e-9)))
    return n, t / n


def split_hamiltonian_flow(eps: float, lam_h: float, shear: float = 1.0, h: float = DEFAULT_H,
                           scheme: str = "yoshida4", y0: float = 0.0) -> FlowSystem:
    """Flow of H = shear y^2/2 + lam_h u v + eps cos(2 pi x)(1 + u) by exact sub-flows."""
    kick, drift = composition(scheme)
    eps, lam_h, shear = float(eps), float(lam_h), float(shear)
    two_pi = 2 * np.pi

    def H(z):
        x, y, u, v = np.atleast_2d(z).T
        return shear * y**2 / 2 + lam_h * u * v + eps * np.cos(two_pi * x) * (1 + u)

    def X(z):
        x, y, u, v = np.atleast_2d(z).T
        c, s = np.cos(two_pi * x), np.sin(two_pi * x)
        return np.column_stack([shear * y, two_pi * eps * s * (1 + u), lam_h * u, -lam_h * v - eps * c])

    def DX(z):
        x, y, u, v = np.atleast_2d(z).T
        c, s = np.cos(two_pi * x), np.sin(two_pi * x)
        D = np.zeros((x.size, 4, 4))
        D[:, 0, 1] = shear
        D[:, 1, 0] = two_pi**2 * eps * c * (1 + u)
        D[:, 1, 2] = two_pi * eps * s
        D[:, 2, 2] = lam_h
        D[:, 3, 0] = two_pi * eps * s
        D[:, 3, 3] = -lam_h
        return D

    def flow(z, t, jac):
        n, step = _steps(t, h)
        return kernels.split_flow(z, eps, lam_h, shear, step, n, kick, drift, jac)

    lower = np.array([-np.inf, y0 - 0.5, -0.5, -0.5])
    upper = np.array([np.inf, y0 + 0.5, 0.5, 0.5])
    params = {"eps": eps, "lam_h": lam_h, "shear": shear, "h": h, "scheme": scheme}
    return FlowSystem(4, X, DX, flow, pair_J(2), H, scheme, h, True, (0,), lower, upper, "model_B", params)


def rk4_flow(vector_field: Callable, field_jac: Callable, J, hamiltonian=None, h: float = DEFAULT_H,
             angles=(), lower=None, upper=None, name="flow", exact=True) -> FlowSystem:
    """Generic field integrated by classical RK4 with its variational equation."""
    J = np.asarray(J, dtype=float)
    dim = J.shape[0]

    def rhs(z, M):
        dz = vector_field(z)
        return dz, (field_jac(z) @ M if M is not None else None)

    def flow(z, t, jac):
        n, step = _steps(t, h)
        z = np.array(np.atleast_2d(z), dtype=float)
        M = np.broadcast_to(np.eye(dim), (z.shape[0], dim, dim)).copy() if jac else None
        for _ in range(n):
            k1, m1 = rhs(z, M)
            k2, m2 = rhs(z + step / 2 * k1, None if M is None else M + step / 2 * m1)
            k3, m3 = rhs(z + step / 2 * k2, None if M is None else M + step / 2 * m2)
            k4, m4 = rhs(z + step * k3, None if M is None else M + step * m3)
            z = z + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if jac:
                M = M + step / 6 * (m1 + 2 * m2 + 2 * m3 + m4)
        return z, M

    return FlowSystem(dim, vector_field, field_jac, flow, J, hamiltonian, "rk4", h, exact, tuple(angles),
                      lower, upper, name)


def hamiltonian_flow(grad_H: Callable, hess_H: Callable, J, H=None, **kwargs) -> FlowSystem:
    """X = J grad H integrated by RK4."""
    J = np.asarray(J, dtype=float)
    return rk4_flow(lambda z: grad_H(z) @ J.T, lambda z: J @ hess_H(z), J, H, **kwargs)


def symplecticity_defect_flow(flow: FlowSystem, points, t: float = 1.0) -> float:
    z = np.atleast_2d(points)
    _, D = flow.flow(z, t, True)
    J = flow.J
    return float(np.max(np.abs(np.swapaxes(D, -1, -2) @ J @ D - J)))


# ----------------------------------------------------------------------------
# solve + verification


@dataclass(frozen=True)
class FlowVerification:
    defects: dict
    energy_spread: Optional[float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(d < self.tolerance for d in self.defects.values())


def flow_invariance_defect(flow: FlowSystem, K: Embedding, omega, t: float) -> float:
    """max over grid points of |S_t(K(theta)) - K(theta + omega t)|."""
    om = as_omega(omega)
    z = flat(K.values(), K.l)
    zt, _ = flow.flow(z, t, False)
    target = flat(K.shift(om * t).values(), K.l)
    return float(np.max(np.abs(zt - target)))


def energy_spread(flow: FlowSystem, K: Embedding) -> Optional[float]:
    if flow.hamiltonian is None:
        return None
    Hk = flow.hamiltonian(flat(K.values(2), K.l))
    return float(np.max(Hk) - np.min(Hk))


def verify_flow(flow: FlowSystem, K: Embedding, omega, times: Sequence[float] = FLOW_TIMES,
                tol: float = 1e-8) -> FlowVerification:
    defects = {float(t): flow_invariance_defect(flow, K, omega, t) for t in times}
    ver = FlowVerification(defects, energy_spread(flow, K), tol)
    if not ver.passed:
        warnings.warn(f"flow invariance defects {defects} exceed {tol:g}", IntegratorWarning, stacklevel=2)
    return ver


def solve_flow_torus(flow: FlowSystem, K0: Embedding, omega, config: NewtonConfig = NewtonConfig(),
                     splitting=None, times: Sequence[float] = FLOW_TIMES, defect_tol: float = 1e-8,
                     nu_flow: Optional[float] = None):
    """Solve S_1(K) = K(theta + omega) with the map solver, then verify S_t at other times.

    Returns (TorusSolution, FlowVerification); the defects are attached to the
    report under ``flow_defect_t``.
    """
    om = as_omega(omega)
    l = om.size
    certify(om, nu_flow if nu_flow is not None else max(config.nu, l - 1), config.k_max, "flow")
    sys1 = time1_map(flow)
    sol = solve(TorusSolution.seed(K0, sys1, om, splitting), sys1, config)
    ver = verify_flow(flow, sol.K, om, times, defect_tol)
    sol.report.extra["flow_defect_t"] = {f"{t:g}": d for t, d in ver.defects.items()}
    if ver.energy_spread is not None:
        sol.report.extra["energy_spread"] = ver.energy_spread
    return sol, ver


# ----------------------------------------------------------------------------
# direct center diagnostics


@dataclass(frozen=True)
class DirectCenter:
    residual: FourierMap
    S: FourierMap
    avgS: np.ndarray
    spanning: np.ndarray

    @property
    def residual_norm(self) -> float:
        return self.residual.sup_grid()


def spanning_matrix(K: Embedding, deformations: Sequence[Callable], J) -> np.ndarray:
    """avg of Omega(Y_j(K), DK e_i): derivative of the pulled-back class of i_{X_lambda} Omega."""
    z = flat(K.values(), K.l)
    DK = flat(K.derivative().to_grid(), K.l)
    J = np.asarray(J, dtype=float)
    cols = []
    for Y in deformations:
        Yz = np.atleast_2d(Y(z))
        cols.append(np.mean(np.einsum("ni,ij,njk->nk", Yz, J, DK), axis=0))
    return np.array(cols).T.reshape(K.l, len(deformations))


def direct_center_residual(K: Embedding, lam, flow: FlowSystem, deformations: Sequence[Callable],
                           omega, cond_max: float = COND_MAX) -> DirectCenter:
    """Residual d_omega K - X_lambda(K) for X_lambda = X + sum lambda_j Y_j, with the flow
    twist matrix and the cohomology spanning matrix of the family."""
    om = as_omega(omega)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if len(deformations) != lam.size:
        raise ValueError("one deformation field per lambda component is required")
    Sp = spanning_matrix(K, deformations, flow.J)
    cond = np.linalg.cond(Sp) if Sp.size else np.inf
    if not np.isfinite(cond) or cond > cond_max:
        raise CohomologyDegeneracyError(f"family does not span the cohomology (condition {cond:.3e})")
    z = flat(K.values(), K.l)
    X = flow.vector_field(z) + sum(l_j * np.atleast_2d(Y(z)) for l_j, Y in zip(lam, deformations))
    dK = K.periodic.directional(om).to_grid().reshape(-1, K.dim) + K.lift @ om
    res = FourierMap.from_grid(unflat(dK - X, K.grid), K.l)
    S, avgS = flow_twist_S(K, flow.field_jac, flow.J, om, cond_max)
    return DirectCenter(res, S, avgS, Sp)


def recover_lambda(K: Embedding, lam, flow: FlowSystem, deformations: Sequence[Callable], omega) -> np.ndarray:
    """First-order lambda making the averaged tangential equation solvable.

    avg(DK^T J E) must vanish for the center equation; the spanning matrix
    converts the defect into a correction of lambda.
    """
    dc = direct_center_residual(K, lam, flow, deformations, omega)
    DK = flat(K.derivative().to_grid(), K.l)
    E = flat(dc.residual.to_grid(), K.l)
    J = np.asarray(flow.J, dtype=float)
    defect = np.mean(np.einsum("ni,ij,njk->nk", E, J, DK), axis=0)
    return np.atleast_1d(lam) + np.linalg.solve(dc.spanning, defect)
