"""Quasi-Newton iteration for whiskered invariant tori of exact symplectic maps.

Unknowns are the embedding K and a translation lambda in R^l, solving

    F(K(theta)) + G(theta) lambda = K(theta + omega)

with G = [J(K0)^-1 DK0](theta + omega) frozen at the seed.  Each step splits
the linearized equation with the invariant projections: the center part is
solved approximately in the frame Mtilde = [DK, J^-1 DK N], where the cocycle
is upper triangular with unit diagonal, and the stable/unstable parts by their
geometric series.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .bundles import (
    Cocycle,
    RateEstimates,
    Splitting,
    estimate_rates,
    invariance_residual,
    refine_splitting,
    shift_grid,
    solve_stable,
    solve_unstable,
    subspace_distance,
)
from .cohomology import certify, solve_map
from .errors import (
    ConvergenceError,
    DistinctToriError,
    HyperbolicityError,
    HyperbolicityWarning,
    NonQuadraticWarning,
    SplittingDivergedError,
    TwistDegeneracyError,
)
from .fourier import FourierMap, as_omega, torus_grid
from .geometry import (
    COND_MAX,
    Embedding,
    GeometricFrames,
    GramInverse,
    SymplecticSystem,
    flat,
    frame_G,
    frames,
    gram_inverse,
    twist_A_grid,
    twist_Q,
    unflat,
    vanishing_check,
)


@dataclass(frozen=True)
class NewtonConfig:
    solve_tol: float = 1e-10
    lambda_tol: float = 1e-9
    uniq_tol: float = 1e-8
    max_iter: int = 30
    dealias: int = 2
    nu: float = 1.0
    k_max: int = 64
    N_window: int = 16
    split_tol: float = 1e-10
    series_tol: float = 1e-15
    avg_tol: float = 1e-10
    div_floor: float = 1e-14
    cond_max: float = COND_MAX
    tail0: float = 1e-14
    stagnation_ratio: float = 0.5
    stagnation_steps: int = 3
    C_van: float = 1e3
    refresh_G: bool = False

    def __post_init__(self):
        for name in ("solve_tol", "lambda_tol", "uniq_tol", "split_tol", "series_tol", "avg_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 0 or self.dealias < 1:
            raise ValueError("max_iter must be >= 0 and dealias >= 1")


@dataclass
class StepRecord:
    iter: int
    residual: float
    lambda_norm: float
    Lambda_norm: float
    delta_norm: float
    avgA_cond: float
    avgQ_cond: float
    mu1: float
    mu2: float
    mu3: float
    C_h: float
    isotropy: float
    center_dist: float
    split_residual: float
    avgA_inv: float
    tail: float

    def as_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in asdict(self).items()}


@dataclass
class NewtonReport:
    records: list = field(default_factory=list)
    initial_residual: float = float("nan")
    converged: bool = False
    reason: str = ""
    C_dist: float = float("nan")
    vanishing_passed: Optional[bool] = None
    extra: dict = field(default_factory=dict)

    @property
    def residuals(self):
        return [self.initial_residual] + [r.residual for r in self.records]

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            d = r.as_dict()
            d.update({k: v for k, v in self.extra.items() if k == "flow_defect_t"})
            lines.append(json.dumps(d, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "reason": self.reason,
            "iterations": len(self.records),
            "initial_residual": self.initial_residual,
            "final_residual": self.residuals[-1],
            "C_dist": self.C_dist,
            "vanishing_passed": self.vanishing_passed,
            **self.extra,
        }


@dataclass(frozen=True)
class TorusSolution:
    K: Embedding
    lam: np.ndarray
    omega: np.ndarray
    G: FourierMap
    splitting: Optional[Splitting] = None
    report: Optional[NewtonReport] = None
    rates: Optional[RateEstimates] = None

    @classmethod
    def seed(cls, K0: Embedding, sys: SymplecticSystem, omega, splitting=None) -> "TorusSolution":
        om = as_omega(omega)
        return cls(K0, np.zeros(K0.l), om, frame_G(K0, sys, om), splitting)

    @property
    def l(self):
        return self.K.l


# ----------------------------------------------------------------------------
# residual


def _periodic_image(K: Embedding, sys: SymplecticSystem, pad: int):
    """F(K) minus the lift, transformed on the padded grid."""
    per = K.periodic.pad_dealias(pad) if pad > 1 else K.periodic
    theta = torus_grid(per.grid)
    z = per.to_grid() + theta @ K.lift.T
    zf = flat(z, K.l)
    sys.check_domain(zf)
    Fz = sys.map(zf)
    return unflat(Fz, per.grid) - theta @ K.lift.T


def residual_map(K: Embedding, lam, G: FourierMap, omega, sys: SymplecticSystem, pad: int = 2):
    """Returns (E, sup) where E is the residual on the grid of K and sup is its
    maximum over the padded grid before truncation."""
    om = as_omega(omega)
    img = _periodic_image(K, sys, pad)
    target = K.periodic.shift(om) + K.lift @ om
    Gp = G
    if pad > 1:
        Gp, target = G.pad_dealias(pad), target.pad_dealias(pad)
    full = img + Gp.to_grid() @ np.asarray(lam, dtype=float) - target.to_grid()
    sup = float(np.max(np.abs(full)))
    E = FourierMap.from_grid(full, K.l).resize(K.grid)
    return E, sup


def residual(sol: TorusSolution, sys: SymplecticSystem, pad: int = 2) -> FourierMap:
    return residual_map(sol.K, sol.lam, sol.G, sol.omega, sys, pad)[0]


# ----------------------------------------------------------------------------
# linearized solves


@dataclass(frozen=True)
class CenterSolution:
    W: FourierMap
    Lambda: np.ndarray
    Delta: FourierMap


def _fm(arr, grid):
    return FourierMap.from_grid(unflat(arr, grid), len(grid))


def _mv(M, v):
    return np.einsum("nij,nj->ni", M, v)


def center_solve(Ec: FourierMap, fr: GeometricFrames, gram: GramInverse, A: np.ndarray,
                 G: FourierMap, omega, avgA=None, avg_tol=1e-10, div_floor=1e-14,
                 cond_max=COND_MAX) -> CenterSolution:
    """Approximate solution of DF(K) Mtilde W - (Mtilde W)(theta+w) = -Ec - G Lambda.

    Lambda zeroes the average of the second block, avg(W2) makes the first
    block solvable and avg(W1) = 0 fixes the phase.
    """
    om = as_omega(omega)
    grid, l = fr.grid, fr.l
    Ms = fr.shifted("Mtilde", om)
    Js = fr.shifted("J", om)
    Ginv = shift_grid(gram.inverse, grid, om)
    B = -Ginv @ np.swapaxes(Ms, -1, -2) @ Js
    Ecg = flat(Ec.to_grid(), len(grid))
    Gg = flat(G.to_grid(), len(grid))
    r0 = _mv(B, Ecg)
    r1 = B @ Gg
    a1 = np.mean(r1[:, l:, :], axis=0)
    cond = np.linalg.cond(a1)
    if not np.isfinite(cond) or cond > cond_max:
        raise TwistDegeneracyError(f"translation frame does not reach the action block (condition {cond:.3e})")
    Lam = -np.linalg.solve(a1, np.mean(r0[:, l:], axis=0))
    R = r0 + _mv(r1, np.broadcast_to(Lam, (r1.shape[0], l)))
    R1, R2 = R[:, :l], R[:, l:]
    R2 = R2 - np.mean(R2, axis=0)  # zero up to roundoff by the choice of Lambda
    v2 = flat(solve_map(_fm(-R2, grid), om, avg_tol, div_floor).to_grid(), len(grid))
    if avgA is None:
        avgA = np.mean(A, axis=0)
    cA = np.linalg.cond(avgA)
    if not np.isfinite(cA) or cA > cond_max:
        raise TwistDegeneracyError(f"avg(A) is singular (condition number {cA:.3e})")
    Av2 = _mv(A, v2)
    v2 = v2 + np.linalg.solve(avgA, np.mean(R1, axis=0) - np.mean(Av2, axis=0))
    rhs = _mv(A, v2) - R1
    rhs = rhs - np.mean(rhs, axis=0)
    v1 = flat(solve_map(_fm(rhs, grid), om, avg_tol, div_floor).to_grid(), len(grid))
    W = np.concatenate([v1, v2], axis=-1)
    Delta = _mv(fr.Mtilde, W)
    return CenterSolution(_fm(W, grid), Lam, _fm(Delta, grid))


def linearized_residual(K: Embedding, sys: SymplecticSystem, G: FourierMap, omega,
                        Delta: FourierMap, Lam, rhs: FourierMap) -> float:
    """Grid sup of G Lambda + DF(K) Delta - Delta(theta + w) + rhs."""
    om = as_omega(omega)
    z = flat(K.values(), K.l)
    DF = sys.jacobian(z)
    D = flat(Delta.to_grid(), K.l)
    Ds = flat(Delta.shift(om).to_grid(), K.l)
    Gl = flat(G.to_grid(), K.l) @ np.asarray(Lam, dtype=float)
    return float(np.max(np.abs(Gl + _mv(DF, D) - Ds + flat(rhs.to_grid(), K.l))))


# ----------------------------------------------------------------------------
# Newton step


def _cocycle(K: Embedding, sys, omega):
    z = flat(K.values(), K.l)
    return Cocycle(sys.jacobian(z), K.grid, omega)


def _tail_threshold(config: NewtonConfig, m: int) -> float:
    return config.tail0 * 2.0 ** (-m * (config.nu + 1))


def newton_step(sol: TorusSolution, sys: SymplecticSystem, config: NewtonConfig = NewtonConfig(),
                E: Optional[FourierMap] = None, m: int = 0):
    """One quasi-Newton step.  Returns (new solution, StepRecord)."""
    om = sol.omega
    K, G = sol.K, sol.G
    if E is None:
        E = residual(sol, sys, config.dealias)
    split = sol.splitting
    hyperbolic = split is not None and (split.dims[0] or split.dims[2])
    fr = frames(K, sys, split.proj_c if hyperbolic else None)
    cocycle = _cocycle(K, sys, om)
    A = twist_A_grid(K, sys, om, fr, cocycle.matrices)
    avgA = np.mean(A, axis=0)
    _, avgQ = twist_Q(K, sys, G, om, config.cond_max, fr)
    gram = gram_inverse(fr)
    rates = sol.rates
    grid = K.grid
    Eg = flat(E.to_grid(), K.l)
    if hyperbolic:
        if rates is None:
            rates = estimate_rates(cocycle, split, config.N_window)
        Ec = _fm(_mv(split.shifted("c", om), Eg), grid)
    else:
        Ec = E
    cs = center_solve(Ec, fr, gram, A, G, om, avgA, config.avg_tol, config.div_floor, config.cond_max)
    Delta = cs.Delta
    if hyperbolic:
        Etilde = _fm(Eg + flat(G.to_grid(), K.l) @ cs.Lambda, grid).shift(-om)
        if split.dims[0]:
            Delta = Delta + solve_stable(cocycle, split, Etilde, rates, config.series_tol)
        if split.dims[2]:
            Delta = Delta + solve_unstable(cocycle, split, Etilde, rates, config.series_tol)
    Delta = Delta.threshold(_tail_threshold(config, m))
    K_new = K + Delta
    lam_new = sol.lam + cs.Lambda
    G_new = frame_G(K_new, sys, om) if config.refresh_G else G
    new_split, split_res, new_rates = split, 0.0, None
    if hyperbolic:
        new_cocycle = _cocycle(K_new, sys, om)
        new_split = refine_splitting(new_cocycle, split)
        split_res = invariance_residual(new_cocycle, new_split)
        if split_res > config.split_tol:
            warnings.warn(f"refined splitting invariance residual {split_res:.3e} exceeds {config.split_tol:g}",
                          HyperbolicityWarning, stacklevel=2)
        new_rates = estimate_rates(new_cocycle, new_split, config.N_window)
    new = replace(sol, K=K_new, lam=lam_new, G=G_new, splitting=new_split, rates=new_rates)
    E_new, res_new = residual_map(K_new, lam_new, G_new, om, sys, config.dealias)
    fr_new = frames(K_new, sys, new_split.proj_c if hyperbolic else None)
    center_dist = subspace_distance(fr_new.Mtilde, new_split.Bc) if hyperbolic else 0.0
    rep = new_rates or rates
    record = StepRecord(
        iter=m + 1,
        residual=res_new,
        lambda_norm=float(np.max(np.abs(lam_new))),
        Lambda_norm=float(np.max(np.abs(cs.Lambda))),
        delta_norm=Delta.sup_grid(),
        avgA_cond=float(np.linalg.cond(avgA)),
        avgQ_cond=float(np.linalg.cond(avgQ)),
        mu1=rep.mu1 if rep else float("nan"),
        mu2=rep.mu2 if rep else float("nan"),
        mu3=rep.mu3 if rep else float("nan"),
        C_h=rep.C_h if rep else float("nan"),
        isotropy=float(np.max(np.abs(fr_new.L))),
        center_dist=center_dist,
        split_residual=split_res,
        avgA_inv=float(np.linalg.norm(np.linalg.inv(avgA), np.inf)),
        tail=K_new.periodic.tail_mass(tuple(n // 4 for n in grid)),
    )
    return new, record, E_new


# ----------------------------------------------------------------------------
# driver


def _prepare(sol0: TorusSolution, sys, config: NewtonConfig):
    split = sol0.splitting
    rates = None
    if split is not None and (split.dims[0] or split.dims[2]):
        cocycle = _cocycle(sol0.K, sys, sol0.omega)
        split = refine_splitting(cocycle, split)
        rates = estimate_rates(cocycle, split, config.N_window)
        if not (rates.mu1 < 1 and rates.mu2 < 1):
            raise HyperbolicityError(f"seed splitting is not hyperbolic: {rates}")
    return replace(sol0, splitting=split, rates=rates)


def solve(sol0: TorusSolution, sys: SymplecticSystem, config: NewtonConfig = NewtonConfig(),
          callback: Optional[Callable] = None) -> TorusSolution:
    """Iterate Newton steps until the grid-sup residual drops below solve_tol.

    Raises ConvergenceError (carrying the report) on stagnation, divergence
    or exhausted iterations.
    """
    certify(sol0.omega, max(config.nu, sol0.l), config.k_max, "map")
    report = NewtonReport()
    E, res = residual_map(sol0.K, sol0.lam, sol0.G, sol0.omega, sys, config.dealias)
    report.initial_residual = res
    try:
        sol = _prepare(sol0, sys, config)
    except (HyperbolicityError, SplittingDivergedError) as exc:
        report.reason = type(exc).__name__
        raise ConvergenceError(f"seed splitting unusable: {exc}", report, report.reason) from exc
    slow = 0
    m = 0
    while res >= config.solve_tol:
        if m >= config.max_iter:
            report.reason = "max-iterations"
            raise ConvergenceError(f"no convergence in {config.max_iter} steps (residual {res:.3e})", report, "max-iterations")
        try:
            sol_new, rec, E_new = newton_step(sol, sys, config, E, m)
        except Exception as exc:  # sub-solver failure: keep the report
            report.reason = type(exc).__name__
            raise ConvergenceError(f"step {m + 1} failed: {exc}", report, report.reason) from exc
        report.records.append(rec)
        if callback is not None:
            callback(rec)
        if not np.isfinite(rec.residual):
            report.reason = "divergence"
            raise ConvergenceError("residual is not finite", report, "divergence")
        ratio = rec.residual / res
        slow = slow + 1 if ratio > config.stagnation_ratio else 0
        if slow >= config.stagnation_steps:
            warnings.warn(f"residual ratio above {config.stagnation_ratio} for {slow} steps", NonQuadraticWarning, stacklevel=2)
            report.reason = "stagnation"
            raise ConvergenceError(f"stagnation at residual {rec.residual:.3e}", report, "stagnation")
        sol, E, res = sol_new, E_new, rec.residual
        m += 1
    report.converged = True
    report.reason = "converged"
    dist = float(np.max(np.abs(sol.K.periodic.to_grid() - sol0.K.periodic.to_grid())))
    report.C_dist = dist / report.initial_residual if report.initial_residual > 0 else 0.0
    if sys.exact:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vc = vanishing_check(sol.lam, res, config.C_van, config.lambda_tol)
        report.vanishing_passed = vc.passed
        if not vc.passed:
            vanishing_check(sol.lam, res, config.C_van, config.lambda_tol)
    return replace(sol, report=report)


def is_quadratic(residuals: Sequence[float], order: float = 1.7, consecutive: int = 2, floor: float = 1e-13) -> bool:
    """log E_{m+1} / log E_m >= order on `consecutive` consecutive steps above the floor."""
    r = [x for x in residuals if x > floor]
    run = 0
    for a, b in zip(r, r[1:]):
        if a < 1 and math.log(b) / math.log(a) >= order:
            run += 1
            if run >= consecutive:
                return True
        else:
            run = 0
    return False


# ----------------------------------------------------------------------------
# uniqueness


@dataclass(frozen=True)
class PhaseLock:
    tau: np.ndarray
    mismatch: float
    iterations: int


def phase_lock(K1: Embedding, K2: Embedding, omega=None, uniq_tol: float = 1e-8, max_iter: int = 50) -> PhaseLock:
    """Find tau with K1(theta + tau) = K2(theta).

    The averaged lift condition fixes tau exactly when K2 is a translate of K1;
    Gauss-Newton on the tangential component then removes the residual.
    """
    if K1.grid != K2.grid:
        K2 = K2.resize(K1.grid)
    if not np.allclose(K1.lift, K2.lift):
        raise DistinctToriError("embeddings have different lifts", np.full(K1.l, np.nan), np.inf)
    dav = K2.periodic.average() - K1.periodic.average()
    tau = np.linalg.lstsq(K1.lift, dav, rcond=None)[0]
    l = K1.l
    its = 0
    for its in range(1, max_iter + 1):
        Ks = K1.shift(tau)
        diff = flat(Ks.values() - K2.values(), l)
        DK = flat(Ks.derivative().to_grid(), l)
        N = np.linalg.inv(np.swapaxes(DK, -1, -2) @ DK)
        step = np.mean(_mv(N @ np.swapaxes(DK, -1, -2), diff), axis=0)
        tau = tau - step
        if np.max(np.abs(step)) < 1e-15:
            break
    mismatch = float(np.max(np.abs(K1.shift(tau).values() - K2.values())))
    if mismatch > uniq_tol:
        raise DistinctToriError(f"tori differ by {mismatch:.3e} after phase lock", tau, mismatch)
    return PhaseLock(tau, mismatch, its)


# ----------------------------------------------------------------------------
# continuation


class Branch(list):
    """Solutions along a continuation branch with per-step Lipschitz ratios."""

    def __init__(self):
        super().__init__()
        self.params = []
        self.ratios = []
        self.failure = None


def continue_family(sol: TorusSolution, family: Callable, params: Sequence, config: NewtonConfig = NewtonConfig(),
                    distance: Optional[Callable] = None, predictor: str = "secant") -> Branch:
    """Solve along ``family(p) -> (system, omega)`` for each p in params.

    Each solve starts from the previous torus (secant extrapolation when two
    are available); the ratio ||K_p - K_p'|| / |p - p'| is logged, with the
    distance between parameters given by ``distance`` (default |omega - omega'|
    if omega varies, else |p - p'|).
    """
    branch = Branch()
    prev, prev_p = sol, None
    older = None
    for p in params:
        sys, omega = family(p)
        om = as_omega(omega)
        K0 = prev.K
        if predictor == "secant" and older is not None and prev_p is not None:
            dp = _param_dist(p, prev_p, prev, om, distance)
            dq = _param_dist(prev_p, older[1], older[0], prev.omega, distance)
            if dq > 0:
                K0 = prev.K + (prev.K.periodic - older[0].K.periodic) * (dp / dq)
        seed = TorusSolution.seed(K0, sys, om, prev.splitting)
        try:
            new = solve(seed, sys, config)
        except Exception as exc:
            branch.failure = (p, exc)
            break
        if branch:
            dp = _param_dist(p, prev_p, prev, om, distance)
            dK = float(np.max(np.abs(new.K.values() - prev.K.values())))
            branch.ratios.append(dK / dp if dp > 0 else float("nan"))
        older = (prev, prev_p) if branch else None
        branch.append(new)
        branch.params.append(p)
        prev, prev_p = new, p
    return branch


def _param_dist(p, q, sol_q, om_p, distance):
    if distance is not None:
        return float(distance(p, q))
    dom = float(np.max(np.abs(as_omega(om_p) - sol_q.omega)))
    if dom > 0:
        return dom
    return float(np.max(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))))


# ----------------------------------------------------------------------------
# condition numbers


def condition_report(sol: TorusSolution, sys: SymplecticSystem, rates: Optional[RateEstimates] = None,
                     alpha: float = 4.0, beta: float = 2.0, flag_level: float = 1e2) -> dict:
    """Composite constants C^c, C^h and C of the small-twist estimates."""
    K, om = sol.K, sol.omega
    split = sol.splitting
    fr = frames(K, sys, split.proj_c if split is not None else None)
    A = twist_A_grid(K, sys, om, fr)
    avgA = np.mean(A, axis=0)
    Qg = np.swapaxes(fr.shifted("DK", om), -1, -2) @ fr.shifted("J", om) @ flat(sol.G.to_grid(), K.l)
    avgQ = np.mean(Qg, axis=0)
    inv_norm = lambda M: float(np.linalg.norm(np.linalg.inv(M), np.inf))
    row = lambda arr: float(np.max(np.sum(np.abs(arr), axis=-1)))
    rates = rates or sol.rates
    if split is not None:
        Pc, Ps, Pu = row(split.proj_c), row(split.proj_s), row(split.proj_u)
    else:
        Pc, Ps, Pu = 1.0, 0.0, 0.0
    out = {
        "Pi_c": Pc, "Pi_s": Ps, "Pi_u": Pu,
        "DK": row(fr.DK), "N": row(fr.N), "G": row(flat(sol.G.to_grid(), K.l)),
        "avgA_inv": inv_norm(avgA), "avgQ_inv": inv_norm(avgQ),
    }
    twist = out["avgA_inv"] + out["avgQ_inv"]
    geom = max(1.0, out["DK"]) ** alpha * max(1.0, out["N"]) ** beta
    Cc = Pc * geom * twist
    if rates is not None:
        hs = Ps / (1 - rates.mu1) if rates.mu1 < 1 else math.inf
        hu = Pu / (1 - rates.mu2) if rates.mu2 < 1 else math.inf
        hyp = max(hs, hu)
        Ch = rates.C_h * (1 + Cc) * hyp
        C = rates.C_h**2 * hyp**2 + Pc**2 * geom * twist**2
        out.update(mu1=rates.mu1, mu2=rates.mu2, C_h_rate=rates.C_h, hyperbolic_factor=hyp)
    else:
        Ch = 0.0
        C = Pc**2 * geom * twist**2
    out.update(C_c=Cc, C_hyp=Ch, C=C, alpha=alpha, beta=beta)
    flags = [k for k in ("avgA_inv", "avgQ_inv", "hyperbolic_factor", "C_c", "C_hyp") if out.get(k, 0) > flag_level]
    out["flags"] = flags
    return out
