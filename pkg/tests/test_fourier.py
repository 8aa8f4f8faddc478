import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whisker.errors import GridError
from whisker.fourier import FourierMap, Frequency, is_power_of_two, torus_grid

TH = torus_grid(64)[:, 0]


def fm(values):
    return FourierMap.from_grid(values, 1)


def test_constant_field():
    f = fm(np.full(64, 3.0))
    assert f.coeffs[0] == pytest.approx(3.0)
    assert np.max(np.abs(f.coeffs[1:])) == 0.0


def test_cosine_modes():
    f = fm(np.cos(2 * np.pi * TH))
    c = f.coeffs
    assert abs(c[1] - 0.5) < 1e-13 and abs(c[-1] - 0.5) < 1e-13
    rest = np.delete(c, [1, 63])
    assert np.max(np.abs(rest)) < 1e-13


def test_round_trip(rng):
    coef = rng.standard_normal(10) * np.exp(-np.arange(10))
    vals = sum(a * np.cos(2 * np.pi * k * TH + k) for k, a in enumerate(coef))
    assert np.max(np.abs(fm(vals).to_grid() - vals)) < 1e-13


def test_rejects_bad_grid():
    with pytest.raises(GridError):
        FourierMap(np.zeros(100), 1)
    assert is_power_of_two(64) and not is_power_of_two(100)


def test_shift_quarter():
    f = fm(np.cos(2 * np.pi * TH)).shift(0.25)
    assert np.max(np.abs(f.to_grid() + np.sin(2 * np.pi * TH))) < 1e-14


def test_shift_identity_and_group(rng):
    f = fm(np.exp(np.sin(2 * np.pi * TH)))
    assert f.shift(0.0).allclose(f, 0.0)
    w = 0.6180339887
    assert np.max(np.abs(f.shift(w).shift(-w).to_grid() - f.to_grid())) < 1e-14


def test_derivatives():
    f = fm(np.sin(2 * np.pi * TH))
    assert np.max(np.abs(f.derivative().to_grid() - 2 * np.pi * np.cos(2 * np.pi * TH))) < 1e-12
    w = 0.3
    assert f.directional(w).allclose(f.derivative() * w, 1e-14)
    assert fm(np.full(64, 2.0)).directional(w).sup_grid() == 0.0


def test_norms():
    c = fm(np.cos(2 * np.pi * TH))
    assert abs(c.average()[()] if c.average().ndim else c.average()) < 1e-15
    assert float(c.norm(0.0)) == pytest.approx(1.0, abs=1e-13)
    assert fm(np.full(64, 2.5)).sup_grid() == pytest.approx(2.5)


def _exact_cos(n=64):
    coeffs = np.zeros(n, dtype=complex)
    coeffs[1] = coeffs[-1] = 0.5
    return FourierMap(coeffs, 1)


def test_strip_norm_weights():
    c = _exact_cos()
    assert float(c.norm(0.1)) == pytest.approx(np.exp(2 * np.pi * 0.1), rel=1e-13)
    with pytest.raises(ValueError):
        c.norm(-1.0)


def test_pad_truncate():
    coeffs = np.zeros(64, dtype=complex)
    coeffs[1] = coeffs[-1] = 0.5
    coeffs[3], coeffs[-3] = -0.05j, 0.05j
    f = FourierMap(coeffs, 1)
    back = f.pad_dealias(2).resize(64)
    assert back.allclose(f, 1e-15)
    g, tail = f.truncate(8)
    assert tail == 0.0
    assert np.max(np.abs(g.resize(64).coeffs - f.coeffs)) < 1e-15


def test_tail_mass_geometric():
    k = np.fft.fftfreq(64, 1 / 64).round()
    coeffs = np.exp(-np.abs(k))
    coeffs[32] = 0.0
    f = FourierMap(coeffs, 1)
    expected = 2 * sum(np.exp(-j) for j in range(11, 32))
    assert f.tail_mass(10) == pytest.approx(expected, rel=1e-12)


def test_vector_and_matrix_values(rng):
    vals = np.stack([np.cos(2 * np.pi * TH), np.sin(2 * np.pi * TH)], axis=-1)
    f = fm(vals)
    assert f.shape == (2,)
    M = FourierMap.from_grid(np.broadcast_to(np.eye(2), (64, 2, 2)), 1)
    assert np.max(np.abs((M @ f).to_grid() - vals)) < 1e-14


def test_two_torus():
    grid = torus_grid((16, 8))
    vals = np.cos(2 * np.pi * (grid[..., 0] - 2 * grid[..., 1]))
    f = FourierMap.from_grid(vals, 2)
    w = np.array([0.3, 0.1])
    shifted = np.cos(2 * np.pi * ((grid[..., 0] + 0.3) - 2 * (grid[..., 1] + 0.1)))
    assert np.max(np.abs(f.shift(w).to_grid() - shifted)) < 1e-13


def test_frequency_type():
    w = Frequency(0.5)
    assert w.l == 1 and w.kind == "map"
    with pytest.raises(ValueError):
        Frequency(float("nan"))
    with pytest.raises(ValueError):
        Frequency(0.1, kind="other")


def test_point_evaluation_matches_grid():
    f = fm(np.exp(np.cos(2 * np.pi * TH)))
    pts = np.array([[0.0], [0.123], [0.9]])
    assert np.max(np.abs(f(pts) - np.exp(np.cos(2 * np.pi * pts[:, 0])))) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.0, 1.0), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_shift_commutes_with_derivative(w, a):
    vals = sum(c * np.cos(2 * np.pi * (k + 1) * TH) for k, c in enumerate(a))
    f = fm(vals)
    lhs = f.shift(w).derivative()
    rhs = f.derivative().shift(w)
    assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-12
