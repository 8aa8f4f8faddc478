import warnings

import numpy as np
import pytest

from whisker.errors import CohomologyDegeneracyError, ConvergenceError
from whisker.flows import (
    composition,
    direct_center_residual,
    energy_spread,
    flow_invariance_defect,
    hamiltonian_flow,
    recover_lambda,
    scheme_order,
    solve_flow_torus,
    spanning_matrix,
    split_hamiltonian_flow,
    symplecticity_defect_flow,
    time1_map,
)
from whisker.geometry import pair_J
from whisker.models import model_B

E_Y = lambda z: np.broadcast_to([0.0, 1.0, 0.0, 0.0], (np.atleast_2d(z).shape[0], 4))
ZERO = lambda z: np.zeros((np.atleast_2d(z).shape[0], 4))


def _points(rng, y0, n=10):
    return np.column_stack([rng.random(n), y0 + 0.05 * rng.standard_normal(n), 0.05 * rng.standard_normal((n, 2))])


@pytest.mark.parametrize("scheme", ["strang", "yoshida4", "yoshida6"])
def test_composition_consistent(scheme):
    kick, drift = composition(scheme)
    assert kick.sum() == pytest.approx(1.0) and drift.sum() == pytest.approx(1.0)
    assert len(kick) == len(drift) + 1


def test_scheme_order_observed(rng):
    z = _points(rng, 0.6)
    ref = split_hamiltonian_flow(0.05, np.log(2.0), h=1 / 512, scheme="yoshida6").flow(z, 1.0, False)[0]
    for scheme in ("strang", "yoshida4"):
        errs = [np.max(np.abs(split_hamiltonian_flow(0.05, np.log(2.0), h=h, scheme=scheme).flow(z, 1.0, False)[0] - ref))
                for h in (1 / 8, 1 / 16)]
        assert np.log2(errs[0] / errs[1]) == pytest.approx(scheme_order(scheme), abs=0.4)
    with pytest.raises(ValueError):
        composition("euler")


def test_pure_rotation_time1():
    w0 = 0.37
    flow = hamiltonian_flow(lambda z: np.column_stack([0 * z[:, 0], w0 + 0 * z[:, 1]]),
                            lambda z: np.zeros((z.shape[0], 2, 2)), pair_J(1), h=0.25)
    z = np.array([[0.1, 0.2], [0.5, -0.3]])
    out = time1_map(flow).map(z)
    assert np.max(np.abs(out - (z + [w0, 0.0]))) < 1e-15


def test_linear_hyperbolic_time1():
    lam = 0.8
    flow = split_hamiltonian_flow(0.0, lam, shear=0.0)
    z = np.array([[0.0, 0.0, 0.3, -0.2]])
    out, D = flow.flow(z, 1.0, True)
    assert np.allclose(out[0, 2:], [np.exp(lam) * 0.3, -np.exp(-lam) * 0.2], atol=1e-15)
    assert np.allclose(np.diag(D[0])[2:], [np.exp(lam), np.exp(-lam)], atol=1e-14)


def test_flow_symplectic(rng):
    flow = model_B(0.02).system
    assert symplecticity_defect_flow(flow, _points(rng, 0.6), 0.5) < 1e-12


def test_exact_flow_torus_defects():
    m = model_B(0.0)
    K = m.seed_torus(32)
    for t in (0.25, 0.5, 1.0, 2.0):
        assert flow_invariance_defect(m.system, K, m.omega0, t) < 1e-12
    assert energy_spread(m.system, K) < 1e-15


def test_model_B_converges():
    m = model_B(0.02)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol, ver = solve_flow_torus(m.system, m.seed_torus(64), m.omega0, splitting=m.seed_splitting(64),
                                    times=(0.5,))
    assert ver.defects[0.5] < 1e-8 and ver.passed
    assert "flow_defect_t" in sol.report.extra


def test_mismatched_frequency_aborts_with_report():
    m = model_B(0.02)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ConvergenceError) as exc:
            solve_flow_torus(m.system, m.seed_torus(64), m.omega0 + 0.05, splitting=m.seed_splitting(64))
    assert exc.value.report is not None and exc.value.report.records


def test_direct_center_exact_torus():
    m = model_B(0.0)
    K = m.seed_torus(32)
    dc = direct_center_residual(K, [0.0], m.system, [E_Y], m.omega0)
    assert dc.residual_norm < 1e-12
    assert abs(dc.spanning[0, 0]) == pytest.approx(1.0)
    assert abs(abs(dc.avgS[0, 0]) - 1.0) < 1e-12


def test_direct_center_degenerate_family():
    m = model_B(0.0)
    K = m.seed_torus(32)
    assert spanning_matrix(K, [ZERO], m.system.J)[0, 0] == 0.0
    with pytest.raises(CohomologyDegeneracyError):
        direct_center_residual(K, [0.0], m.system, [ZERO], m.omega0)


def test_recover_lambda():
    m = model_B(0.0)
    K = m.seed_torus(32)
    # with lambda = 0.01 the field X + lambda e_y leaves the flat torus; the averaged
    # tangential defect corrects lambda back to zero
    lam = recover_lambda(K, [0.01], m.system, [E_Y], m.omega0)
    assert lam[0] == pytest.approx(0.0, abs=1e-14)
