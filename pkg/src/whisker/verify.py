"""A-posteriori checks of a computed torus.

Each check returns a :class:`Check` row (value, threshold, verdict).  The orbit
check iterates the map from points of the torus and compares with the rotation;
hyperbolic components of the deviation are removed after every step, since
along the unstable bundle roundoff alone reaches O(1) within a few dozen
iterations and says nothing about the torus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bundles import Cocycle, Splitting, invariance_residual, refine_splitting
from .fourier import FourierMap, as_omega
from .geometry import Embedding, SymplecticSystem, flat, frames, reducibility
from .newton import residual_map

UNIT_ROUNDOFF = np.finfo(float).eps / 2
ALL_CHECKS = ("residual", "isotropy", "reducibility", "splitting", "vanishing", "shadowing")


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class Shadowing:
    defects: np.ndarray
    slope_bound: float
    intercept: float

    @property
    def passed(self) -> bool:
        n = np.arange(1, self.defects.size + 1)
        return bool(np.all(self.defects <= self.intercept + self.slope_bound * n))

    @property
    def worst_ratio(self) -> float:
        n = np.arange(1, self.defects.size + 1)
        return float(np.max(self.defects / (self.intercept + self.slope_bound * n)))


def _start_points(l: int, n_points: int) -> np.ndarray:
    t = np.arange(n_points) / n_points
    return np.stack([np.mod(t * (j + 1), 1.0) for j in range(l)], axis=1)


def shadowing(K: Embedding, omega, sys: SymplecticSystem, splitting: Optional[Splitting] = None,
              n_iter: int = 1000, n_points: int = 16, residual: float = 0.0) -> Shadowing:
    """Iterate F from K(theta_j) and record max_j |F^n(K(theta_j)) - K(theta_j + n omega)|.

    Angles are reduced mod 1 along the way (F commutes with the integer
    translations of the lift).  With a splitting, the deviation is projected
    onto the center bundle after every step.
    """
    om = as_omega(omega)
    theta = _start_points(K.l, n_points)
    z = K(theta)
    Pc = splitting.projection("c") if splitting is not None and (splitting.dims[0] or splitting.dims[2]) else None
    out = np.empty(n_iter)
    for n in range(n_iter):
        z = sys.map(z)
        theta = theta + om
        wrap = np.floor(theta)
        theta -= wrap
        z = z - wrap @ K.lift.T
        target = K(theta)
        d = z - target
        if Pc is not None:
            d = np.einsum("nij,nj->ni", Pc(theta), d)
            z = target + d
        out[n] = float(np.max(np.abs(d)))
    slope = 10.0 * residual + 1e3 * UNIT_ROUNDOFF
    return Shadowing(out, slope, slope)


def verify_torus(K: Embedding, lam, G: FourierMap, omega, sys: SymplecticSystem,
                 seed_split: Optional[Splitting] = None, checks: Sequence[str] = ALL_CHECKS,
                 solve_tol: float = 1e-10, lambda_tol: float = 1e-9, stored_residual: Optional[float] = None,
                 n_iter: int = 1000, n_points: int = 16) -> list:
    """Run the requested checks; returns a list of Check rows."""
    unknown = set(checks) - set(ALL_CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}; expected a subset of {ALL_CHECKS}")
    om = as_omega(omega)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    rows = []
    E, res = residual_map(K, lam, G, om, sys)
    split = None
    split_res = 0.0
    if seed_split is not None and (seed_split.dims[0] or seed_split.dims[2]):
        coc = Cocycle(sys.jacobian(flat(K.values(), K.l)), K.grid, om)
        try:
            split = refine_splitting(coc, seed_split)
            split_res = invariance_residual(coc, split)
        except Exception as exc:  # reported as a failed check
            split, split_res = None, float("inf")
            split_note = str(exc)
    if "residual" in checks:
        rows.append(Check("residual", res, solve_tol, res < solve_tol))
    if "isotropy" in checks:
        iso = float(np.max(np.abs(frames(K, sys).L), initial=0.0))
        rows.append(Check("isotropy", iso, 1e-9, iso < 1e-9))
    if "reducibility" in checks:
        red = reducibility(K, sys, om, split.proj_c if split is not None else None)
        val = max(red["residual"], red["B_minus_identity"])
        rows.append(Check("reducibility", val, 1e-8, val < 1e-8))
    if "splitting" in checks:
        if seed_split is None or not (seed_split.dims[0] or seed_split.dims[2]):
            rows.append(Check("splitting", 0.0, 1e-9, True, "no hyperbolic bundles"))
        elif split is None:
            rows.append(Check("splitting", float("inf"), 1e-9, False, split_note))
        else:
            ranks = split.defects()["ranks"][1]
            ok = split_res < 1e-9 and ranks == [2 * K.l]
            rows.append(Check("splitting", split_res, 1e-9, ok, f"center rank {ranks}"))
    if "vanishing" in checks:
        lam_norm = float(np.max(np.abs(lam), initial=0.0))
        if sys.exact:
            rows.append(Check("vanishing", lam_norm, lambda_tol, lam_norm < lambda_tol))
        else:
            rows.append(Check("vanishing", lam_norm, lambda_tol, True, "system not exact; skipped"))
    if "shadowing" in checks:
        claimed = stored_residual if stored_residual is not None else res
        sh = shadowing(K, om, sys, split, n_iter, n_points, claimed)
        rows.append(Check("shadowing", sh.worst_ratio, 1.0, sh.passed,
                          f"max defect {sh.defects.max():.3e} after {n_iter} steps"))
    return rows


def format_table(rows) -> str:
    lines = [f"{'check':<14}{'value':>14}{'threshold':>14}  result"]
    for r in rows:
        verdict = "PASS" if r.passed else "FAIL"
        note = f"  ({r.note})" if r.note else ""
        lines.append(f"{r.name:<14}{r.value:>14.3e}{r.threshold:>14.3e}  {verdict}{note}")
    return "\n".join(lines)
