import numpy as np
import pytest

from whisker.bundles import Cocycle, invariance_residual, principal_angle, refine_splitting
from whisker.flows import time1_map
from whisker.geometry import flat, symplecticity_defect
from whisker.models import build_model, model_A, model_B, model_SKEW, model_T, standard_map
from whisker.newton import TorusSolution, residual, solve


def _points(rng, y0, n=25, spread=0.1):
    return np.column_stack([rng.random(n), y0 + spread * rng.standard_normal(n), 0.1 * rng.standard_normal((n, 2))])


def _fd_jacobian(sys, z, h=1e-6):
    cols = []
    for i in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[i] = h
        cols.append((sys.map(z + e) - sys.map(z - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def test_model_T_exact_torus():
    m = model_T()
    sol = TorusSolution.seed(m.seed_torus(32), m.system, m.omega0)
    assert residual(sol, m.system).sup_grid() == 0.0


def test_model_A_reduces_to_T(rng):
    a, t = model_A(0.0), model_T(2.0)
    z = _points(rng, a.y0)
    assert np.max(np.abs(a.system.map(z) - t.system.map(z))) < 1e-14


@pytest.mark.parametrize("name,maker", [("A", lambda: model_A(0.05)), ("SKEW", lambda: model_SKEW(rate_amp=0.2, phase_amp=0.3, eps=0.01)),
                                        ("SKEW-wind", lambda: model_SKEW(wind=1, eps=0.01))])
def test_symplectic_and_jacobian(rng, name, maker):
    m = maker()
    z = _points(rng, m.y0)
    assert symplecticity_defect(m.system, z) < 1e-12
    assert np.max(np.abs(m.system.jacobian(z) - _fd_jacobian(m.system, z))) < 1e-7


def test_model_A_standard_map_limit(rng):
    """With u = v = 0 the (x, y) dynamics is the standard map conjugated by a half kick."""
    eps = 0.03
    m = model_A(eps, lam_h=0.0)
    k = 4 * np.pi**2 * eps
    sm = standard_map(k)
    xy = np.column_stack([rng.random(10), 0.6 + 0.1 * rng.standard_normal(10)])

    def half_kick(p, sign=1):
        return np.column_stack([p[:, 0], p[:, 1] + sign * np.pi * eps * np.sin(2 * np.pi * p[:, 0])])

    expected = half_kick(sm.map(half_kick(xy, -1)))
    z = np.column_stack([xy, np.zeros((10, 2))])
    assert np.max(np.abs(m.system.map(z)[:, :2] - expected)) < 1e-14


def test_model_B_eps0_closed_form(rng):
    m = model_B(0.0)
    z = _points(rng, m.y0)
    out = time1_map(m.system).map(z)
    lam = np.log(2.0)
    exp = np.column_stack([z[:, 0] + z[:, 1], z[:, 1], np.exp(lam) * z[:, 2], np.exp(-lam) * z[:, 3]])
    assert np.max(np.abs(out - exp)) < 1e-14


def test_skew_reduces_to_T(rng):
    s, t = model_SKEW(rate=0.5), model_T(2.0)
    z = _points(rng, s.y0)
    assert np.max(np.abs(s.system.map(z) - t.system.map(z))) < 1e-14


def test_skew_bundles_recovered():
    m = model_SKEW(wind=0, phase_amp=0.4, rate_amp=0.2)
    N = 64
    K = m.seed_torus(N)
    coc = Cocycle(m.system.jacobian(flat(K.values(), 1)), (N,), m.omega0)
    exact = m.seed_splitting(N)
    assert invariance_residual(coc, exact) < 1e-12
    approx = model_T().seed_splitting(N)
    new = refine_splitting(coc, approx)
    assert invariance_residual(coc, new) < 1e-10
    assert principal_angle(new.Bs, exact.Bs) < 1e-9


def test_skew_exact_seed_converges_immediately():
    m = model_SKEW(wind=1, rate_amp=0.2)
    sol0 = TorusSolution.seed(m.seed_torus(32), m.system, m.omega0, m.seed_splitting(32))
    sol = solve(sol0, m.system)
    assert len(sol.report.records) <= 1
    assert sol.report.residuals[-1] < 1e-12


def test_build_model():
    assert build_model("a", eps=0.01).family == "A"
    with pytest.raises(ValueError):
        build_model("Z")
    with pytest.raises(ValueError):
        model_T(0.5)
