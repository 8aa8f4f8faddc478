"""Pure numpy implementation of the hot kernels (fallback for the Cython core).

The single kernel integrates the kicked-saddle Hamiltonian

    H = shear * y**2 / 2 + lam * u * v + eps * cos(2 pi x) * (1 + u)

on points (x, y, u, v) by a composition of the exact flows of
``H1 = shear * y**2 / 2 + lam * u * v`` (drift) and
``H2 = eps * cos(2 pi x) * (1 + u)`` (kick), optionally carrying the
Jacobian of the composed map.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def split_flow(z, eps, lam, shear, h, nsteps, kick, drift, jac=False):
    """Compose ``nsteps`` steps of the splitting scheme of step ``h``.

    ``kick`` has one more entry than ``drift``; a step applies
    kick[0], drift[0], kick[1], ..., drift[-1], kick[-1].
    Returns ``(z_out, jac_out)`` with ``jac_out`` None unless requested.
    """
    z = np.array(z, dtype=float, copy=True)
    if z.ndim != 2 or z.shape[1] != 4:
        raise ValueError("points must have shape (n, 4)")
    x, y, u, v = (z[:, i].copy() for i in range(4))
    kick = np.asarray(kick, dtype=float)
    drift = np.asarray(drift, dtype=float)
    n = z.shape[0]
    if jac:
        m = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
        rx, ry, ru, rv = m[:, 0, :], m[:, 1, :], m[:, 2, :], m[:, 3, :]
    for _ in range(int(nsteps)):
        for stage in range(drift.size + 1):
            tau = kick[stage] * h
            if tau != 0.0:
                s2 = np.sin(TWO_PI * x)
                c2 = np.cos(TWO_PI * x)
                if jac:
                    a = TWO_PI * TWO_PI * eps * tau * c2 * (1.0 + u)
                    b = TWO_PI * eps * tau * s2
                    ry += a[:, None] * rx + b[:, None] * ru
                    rv += b[:, None] * rx
                y = y + TWO_PI * eps * tau * s2 * (1.0 + u)
                v = v - eps * tau * c2
            if stage == drift.size:
                break
            sigma = drift[stage] * h
            eu = np.exp(lam * sigma)
            x = x + shear * sigma * y
            u = u * eu
            v = v / eu
            if jac:
                rx += (shear * sigma) * ry
                ru *= eu
                rv /= eu
    out = np.stack([x, y, u, v], axis=1)
    if jac:
        return out, np.stack([rx, ry, ru, rv], axis=1)
    return out, None
