"""Small-divisor equations over a rotation and Diophantine certificates.

Two equations are solved mode by mode:

* maps:  ``v(theta + omega) - v(theta) = h(theta)``, divisor ``exp(2 pi i k.omega) - 1``
* flows: ``d_omega v = h``, divisor ``2 pi i k.omega``

Both return the unique zero-average solution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NearResonanceError, ResonanceError, SolvabilityError
from .fourier import FourierMap, Frequency, as_omega

__all__ = [
    "DiophantineCertificate",
    "certify",
    "solve_map",
    "solve_flow",
    "map_residual",
    "flow_residual",
    "estimate_constant",
    "AVG_TOL",
    "DIV_FLOOR",
    "golden_mean",
    "noble",
    "convergents",
]

AVG_TOL = 1e-10
DIV_FLOOR = 1e-14


@dataclass(frozen=True)
class DiophantineCertificate:
    """Smallest kappa with |k.omega - n|^-1 <= kappa |k|_1^nu on 0 < |k|_1 <= k_max."""

    kappa: float
    nu: float
    k_max: int
    worst_k: tuple
    kind: str = "map"


def _frac_dot(k, omega):
    """k . omega in extended precision, split as (nearest integer, remainder)."""
    acc = np.longdouble(0)
    for ki, wi in zip(k, omega):
        acc += np.longdouble(int(ki)) * np.longdouble(wi)
    n = np.round(acc)
    return n, acc - n


def _half_lattice(l, k_max):
    """Integer vectors with 0 < |k|_1 <= k_max, one of each pair +-k."""
    rng = range(-k_max, k_max + 1)
    for k in itertools.product(rng, repeat=l):
        s = sum(abs(c) for c in k)
        if s == 0 or s > k_max:
            continue
        first = next(c for c in k if c != 0)
        if first > 0:
            yield k


def certify(omega, nu: float, k_max: int, kind: str | None = None) -> DiophantineCertificate:
    """Minimal Diophantine constant of omega on the finite range |k|_1 <= k_max.

    Raises ResonanceError naming k when k.omega hits an integer (maps) or zero
    (flows) to within a few ulps.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if kind is None:
        kind = omega.kind if isinstance(omega, Frequency) else "map"
    om = as_omega(omega)
    l = om.size
    floor_nu = l if kind == "map" else l - 1
    if nu < floor_nu:
        raise ValueError(f"nu must be >= {floor_nu} for {kind} frequencies on T^{l}")
    scale = max(1.0, float(np.max(np.abs(om))))
    eps = np.finfo(float).eps
    kappa, worst = 0.0, None
    for k in _half_lattice(l, k_max):
        norm1 = sum(abs(c) for c in k)
        n, rem = _frac_dot(k, om)
        dist = float(abs(rem)) if kind == "map" else float(abs(rem + n))
        if dist <= 4 * eps * norm1 * scale:
            raise ResonanceError(k, f"resonance at k={k}: |k.omega - {int(n)}| = {dist:.3e}")
        bound = 1.0 / (dist * norm1**nu)
        if bound > kappa:
            kappa, worst = bound, tuple(int(c) for c in k)
    return DiophantineCertificate(kappa, float(nu), int(k_max), worst, kind)


def _map_divisors(f: FourierMap, omega):
    om = as_omega(omega)
    mesh = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n).round() for n in f.grid], indexing="ij")
    acc = np.zeros(f.grid, dtype=np.longdouble)
    for m, w in zip(mesh, om):
        acc += m.astype(np.longdouble) * np.longdouble(w)
    phase = (acc - np.round(acc)).astype(float)
    # exp(2 pi i phi) - 1 = 2 i sin(pi phi) exp(i pi phi), accurate for small phi
    return 2j * np.sin(np.pi * phase) * np.exp(1j * np.pi * phase)


def _flow_divisors(f: FourierMap, omega):
    om = as_omega(omega)
    mesh = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n).round() for n in f.grid], indexing="ij")
    acc = np.zeros(f.grid, dtype=np.longdouble)
    for m, w in zip(mesh, om):
        acc += m.astype(np.longdouble) * np.longdouble(w)
    return 2j * np.pi * acc.astype(float)


def _divide(h: FourierMap, div, avg_tol, div_floor):
    avg = h.average()
    if np.max(np.abs(avg), initial=0.0) > avg_tol:
        raise SolvabilityError(
            f"right-hand side has average {np.max(np.abs(avg)):.3e} > {avg_tol:.1e}"
        )
    c = h.coeffs
    nval = len(h.shape)
    active = np.max(np.abs(c).reshape(h.grid + (-1,)), axis=-1) > 0 if nval else np.abs(c) > 0
    zero = (0,) * h.l
    small = (np.abs(div) < div_floor) & active
    small[zero] = False
    if np.any(small):
        idx = np.argwhere(small)[0]
        k = [int(np.fft.fftfreq(n, 1.0 / n)[i].round()) for n, i in zip(h.grid, idx)]
        raise NearResonanceError(k, f"divisor {abs(div[tuple(idx)]):.3e} below floor at k={tuple(k)}")
    safe = np.where(np.abs(div) > 0, div, 1.0)
    out = c / safe.reshape(safe.shape + (1,) * nval)
    out = np.array(out)
    out[zero] = 0.0
    out[np.abs(div) == 0] = 0.0
    return FourierMap(out, h.l)


def solve_map(h: FourierMap, omega, avg_tol: float = AVG_TOL, div_floor: float = DIV_FLOOR) -> FourierMap:
    """Zero-average v with v(theta + omega) - v(theta) = h(theta)."""
    return _divide(h, _map_divisors(h, omega), avg_tol, div_floor)


def solve_flow(h: FourierMap, omega, avg_tol: float = AVG_TOL, div_floor: float = DIV_FLOOR) -> FourierMap:
    """Zero-average v with d_omega v = h."""
    return _divide(h, _flow_divisors(h, omega), avg_tol, div_floor)


def map_residual(v: FourierMap, h: FourierMap, omega) -> float:
    """Grid sup of v(theta + omega) - v(theta) - h(theta)."""
    return (v.shift(omega) - v - h).sup_grid()


def flow_residual(v: FourierMap, h: FourierMap, omega) -> float:
    return (v.directional(omega) - h).sup_grid()


def estimate_constant(v: FourierMap, h: FourierMap, kappa: float, nu: float, rho: float, sigma: float) -> float:
    """Measured C in ||v||_{rho - sigma} <= C kappa sigma^-nu ||h||_rho."""
    if not 0 < sigma <= rho:
        raise ValueError("need 0 < sigma <= rho")
    num = v.norm(rho - sigma).value
    den = kappa * sigma ** (-nu) * h.norm(rho).value
    return num / den if den > 0 else 0.0


def golden_mean() -> float:
    return (math.sqrt(5.0) - 1.0) / 2.0


def noble(prefix) -> float:
    """Continued fraction [0; prefix..., 1, 1, 1, ...] (a noble number)."""
    x = golden_mean()
    for a in reversed(list(prefix)):
        x = 1.0 / (a + x)
    return x


def convergents(x: float, depth: int):
    """Continued-fraction convergents p/q of x (first ``depth`` terms)."""
    a = []
    y = x
    for _ in range(depth):
        ai = math.floor(y)
        a.append(ai)
        frac = y - ai
        if frac < 1e-15:
            break
        y = 1.0 / frac
    p0, q0, p1, q1 = 1, 0, a[0], 1
    out = [(p1, q1)]
    for ai in a[1:]:
        p0, q0, p1, q1 = p1, q1, ai * p1 + p0, ai * q1 + q0
        out.append((p1, q1))
    return out
