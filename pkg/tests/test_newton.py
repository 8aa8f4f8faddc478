import warnings

import numpy as np
import pytest

from whisker.errors import (
    ConvergenceError,
    DistinctToriError,
    DomainEscapeError,
    NonQuadraticWarning,
    TwistDegeneracyError,
)
from whisker.fourier import FourierMap, torus_grid
from whisker.geometry import Embedding, frame_G, frames, gram_inverse, twist_A_grid
from whisker.models import model_A, model_T
from whisker.newton import (
    NewtonConfig,
    TorusSolution,
    center_solve,
    condition_report,
    continue_family,
    is_quadratic,
    linearized_residual,
    newton_step,
    phase_lock,
    residual,
    solve,
)
from whisker.bundles import RateEstimates

N = 64


def _seed(m, n=N, phase=0.0):
    return TorusSolution.seed(m.seed_torus(n, phase), m.system, m.omega0, m.seed_splitting(n))


def _center_setup():
    """Model T restricted to its center: the flat torus with a plain twist frame."""
    m = model_T()
    K = m.seed_torus(N)
    fr = frames(K, m.system)
    A = twist_A_grid(K, m.system, m.omega0, fr)
    G = frame_G(K, m.system, m.omega0)
    return m, K, fr, A, G


def test_residual_exact_and_perturbed():
    m = model_T()
    assert residual(_seed(m), m.system).sup_grid() < 1e-13
    for eps in (0.01, 0.05):
        a = model_A(eps)
        E = residual(_seed(a), a.system).sup_grid()
        assert 0.5 * eps < E < 10 * eps


def test_residual_domain_escape():
    m = model_A(0.01)
    K = m.seed_torus(N)
    big = Embedding(K.periodic * 10.0, K.lift)
    with pytest.raises(DomainEscapeError):
        residual(TorusSolution.seed(big, m.system, m.omega0), m.system)


def test_center_solve_zero():
    m, K, fr, A, G = _center_setup()
    cs = center_solve(FourierMap.zeros((N,), (4,)), fr, gram_inverse(fr), A, G, m.omega0)
    assert cs.W.sup_grid() == 0.0 and np.max(np.abs(cs.Lambda)) == 0.0


def test_center_solve_substitution():
    m, K, fr, A, G = _center_setup()
    th = torus_grid(N)[:, 0]
    vals = np.zeros((N, 4))
    vals[:, 1] = np.cos(2 * np.pi * th)
    vals[:, 0] = 0.3 * np.sin(2 * np.pi * th)
    Ec = FourierMap.from_grid(vals, 1)
    cs = center_solve(Ec, fr, gram_inverse(fr), A, G, m.omega0)
    assert linearized_residual(K, m.system, G, m.omega0, cs.Delta, cs.Lambda, Ec) < 1e-10


def test_center_solve_constant_absorbed_by_lambda():
    m, K, fr, A, G = _center_setup()
    Ec = G[:, 0] * 0.7
    cs = center_solve(Ec, fr, gram_inverse(fr), A, G, m.omega0)
    assert cs.Lambda[0] == pytest.approx(-0.7, abs=1e-14)
    assert cs.W.sup_grid() < 1e-14


def test_newton_step_at_exact_solution():
    m = model_T()
    sol = _seed(m)
    new, rec, _ = newton_step(sol, m.system)
    assert rec.delta_norm == 0.0 and rec.Lambda_norm == 0.0
    assert new.K.periodic.allclose(sol.K.periodic, 0.0)


def test_first_step_quadratic_shape():
    """E1 / E0^2 stays put when eps is halved (the quadratic regime starts at step 1)."""
    from whisker.newton import _prepare

    ratios = []
    for eps in (0.01, 0.005):
        m = model_A(eps)
        sol = _prepare(_seed(m, 128), m.system, NewtonConfig())
        E0 = residual(sol, m.system).sup_grid()
        _, rec, _ = newton_step(sol, m.system)
        assert rec.residual < E0 / 5
        ratios.append(rec.residual / E0**2)
    assert 0.5 < ratios[0] / ratios[1] < 2.0


def test_non_twist_aborts():
    m = model_A(0.01, shear=1e-9)
    sol = _seed(m)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonQuadraticWarning)
        with pytest.raises((TwistDegeneracyError, ConvergenceError)):
            solve(sol, m.system)


def test_model_T_converges_immediately():
    m = model_T()
    sol = solve(_seed(m), m.system)
    assert len(sol.report.records) <= 1 and sol.report.converged


def test_model_A_small_eps_quadratic(model_a_small):
    m, sol = model_a_small
    res = sol.report.residuals
    assert res[-1] < 1e-10 and len(res) - 1 <= 10
    assert is_quadratic(res)
    assert np.max(np.abs(sol.lam)) < 1e-9
    assert sol.report.vanishing_passed


def test_large_eps_aborts_with_report():
    m = model_A(0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ConvergenceError) as exc:
            solve(_seed(m, 128), m.system)
    assert exc.value.report is not None


def test_stagnation_warns():
    m = model_A(0.01)
    cfg = NewtonConfig(solve_tol=1e-30, stagnation_steps=1, max_iter=40)
    with pytest.warns(NonQuadraticWarning):
        with pytest.raises(ConvergenceError) as exc:
            solve(_seed(m, 128), m.system, cfg)
    assert exc.value.reason == "stagnation"


def test_is_quadratic():
    assert is_quadratic([1e-2, 1e-4, 1e-8, 1e-16])
    assert not is_quadratic([1e-2, 1e-3, 1e-4, 1e-5])


def test_phase_lock_constructed_shift(model_a_small):
    _, sol = model_a_small
    K2 = sol.K.shift(0.37)
    pl = phase_lock(sol.K, K2)
    assert abs(pl.tau[0] - 0.37) < 1e-10 and pl.mismatch < 1e-11


def test_phase_lock_solves_agree(model_a_small):
    m, sol = model_a_small
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        other = solve(_seed(m, 128, phase=0.3), m.system)
    pl = phase_lock(sol.K, other.K)
    assert pl.mismatch < 1e-8
    assert abs(pl.tau[0] - 0.3) < 1e-6


def test_phase_lock_distinct():
    a, b = model_T(), model_T(omega0=0.3)
    with pytest.raises(DistinctToriError):
        phase_lock(a.seed_torus(N), b.seed_torus(N))


def test_continuation_in_eps():
    eps = [0.0025, 0.005, 0.0075, 0.01]
    m0 = model_A(0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        start = solve(_seed(m0, 128), m0.system)
        br = continue_family(start, lambda e: (model_A(e).system, m0.omega0), eps)
    assert br.failure is None and len(br) == 4
    assert br.params == eps and len(br.ratios) == 3


def test_continuation_empty():
    m = model_T()
    assert len(continue_family(_seed(m), lambda p: (m.system, m.omega0), [])) == 0


def test_condition_report_model_T():
    m = model_T()
    sol = solve(_seed(m), m.system)
    rep = condition_report(sol, m.system)
    assert np.isfinite(rep["C"]) and rep["flags"] == []
    assert rep["avgA_inv"] == pytest.approx(1.0)


def test_condition_report_small_twist():
    base, weak = model_A(0.0), model_A(0.0, shear=1e-3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r0 = condition_report(solve(_seed(base), base.system), base.system)
        r1 = condition_report(solve(_seed(weak), weak.system), weak.system)
    assert 3e2 < r1["C_c"] / r0["C_c"] < 3e3
    assert "C_c" in r1["flags"] or "avgA_inv" in r1["flags"]


def test_condition_report_rate_pole():
    m = model_T()
    sol = solve(_seed(m), m.system)
    near = RateEstimates(1 - 1e-6, 0.5, 1.0, 1.0, 16)
    rep = condition_report(sol, m.system, near)
    assert rep["C_hyp"] > 1e5 and "hyperbolic_factor" in rep["flags"]
