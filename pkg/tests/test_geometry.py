import numpy as np
import pytest

from whisker.errors import (
    EmbeddingDegeneracyError,
    ExactnessWarning,
    GeometryDegenerateError,
    TwistDegeneracyError,
)
from whisker.fourier import FourierMap, torus_grid
from whisker.geometry import (
    Embedding,
    SymplecticSystem,
    check_J,
    flow_twist_S,
    frame_G,
    frames,
    gram_inverse,
    isotropy_defect,
    j_consistency,
    pair_J,
    reducibility,
    symplecticity_defect,
    twist_A,
    twist_Q,
    vanishing_check,
)
from whisker.models import model_A, model_T, translation_map

N = 32


def _twist2(shear=1.0):
    def evaluate(z, jac):
        out = np.column_stack([z[:, 0] + shear * z[:, 1], z[:, 1]])
        D = np.array([[1.0, shear], [0.0, 1.0]])
        return out, (np.broadcast_to(D, (z.shape[0], 2, 2)).copy() if jac else None)

    return SymplecticSystem(2, evaluate, pair_J(1), True, (0,), name="twist")


def _flat2(y0=0.3):
    vals = np.zeros((N, 2))
    vals[:, 1] = y0
    return Embedding(FourierMap.from_grid(vals, 1), np.array([[1.0], [0.0]]))


def test_pair_J():
    J = pair_J(2)
    assert np.allclose(J, -J.T) and np.allclose(J @ J, -np.eye(4))
    assert J[0, 1] == 1.0


def test_flat_torus_frames():
    m = model_T()
    K = m.seed_torus(N)
    fr = frames(K, m.system)
    assert np.allclose(fr.N, 1.0) and np.max(np.abs(fr.L)) == 0.0
    assert np.allclose(fr.Mtilde[:, :, 0], [1, 0, 0, 0])
    # J^-1 e_x = e_y with J = [[0, 1], [-1, 0]] blocks
    assert np.allclose(fr.Mtilde[:, :, 1], [0, 1, 0, 0])


def test_collapsed_embedding():
    m = model_T()
    K = m.seed_torus(N)
    collapsed = Embedding(K.periodic, np.zeros((4, 1)))
    with pytest.raises(EmbeddingDegeneracyError):
        frames(collapsed, m.system)


def test_twist_Q():
    m = model_T()
    K = m.seed_torus(N)
    G = frame_G(K, m.system, m.omega0)
    _, avgQ = twist_Q(K, m.system, G, m.omega0)
    assert np.max(np.abs(avgQ - np.eye(1))) < 1e-12
    with pytest.raises(TwistDegeneracyError):
        twist_Q(K, m.system, G * 0.0, m.omega0)


def test_twist_Q_close_to_avg_Ninv(model_a_small):
    m, sol = model_a_small
    _, avgQ = twist_Q(sol.K, m.system, sol.G, sol.omega)
    Ninv = np.mean(np.linalg.inv(frames(sol.K, m.system).N), axis=0)
    assert np.max(np.abs(avgQ - Ninv)) < 0.1 * np.max(np.abs(Ninv))


def test_twist_A_integrable_block():
    sys = _twist2()
    _, avgA = twist_A(_flat2(), sys, 0.3)
    assert abs(abs(avgA[0, 0]) - 1.0) < 1e-14
    m = model_T()
    _, avgA = twist_A(m.seed_torus(N), m.system, m.omega0)
    assert abs(abs(avgA[0, 0]) - 1.0) < 1e-14
    with pytest.raises(TwistDegeneracyError):
        twist_A(_flat2(), _twist2(0.0), 0.3)


def _saddle_field(shear=1.0, lam=np.log(2.0)):
    def DX(z):
        D = np.zeros((4, 4))
        D[0, 1] = shear
        D[2, 2], D[3, 3] = lam, -lam
        return np.broadcast_to(D, (z.shape[0], 4, 4))

    return DX


def test_flow_twist_S():
    m = model_T()
    K = m.seed_torus(N)
    _, avgS = flow_twist_S(K, _saddle_field(), pair_J(2), m.omega0)
    assert abs(abs(avgS[0, 0]) - 1.0) < 1e-14
    _, avgS3 = flow_twist_S(K, lambda z: 3.0 * _saddle_field()(z), pair_J(2), m.omega0)
    assert avgS3[0, 0] == pytest.approx(3.0 * avgS[0, 0])
    with pytest.raises(TwistDegeneracyError):
        flow_twist_S(K, _saddle_field(shear=0.0), pair_J(2), m.omega0)


def test_gram_inverse_exact_torus():
    m = model_T()
    fr = frames(m.seed_torus(N), m.system)
    gi = gram_inverse(fr)
    gram = np.swapaxes(fr.Mtilde, -1, -2) @ fr.J @ fr.Mtilde
    assert np.max(np.abs(gram @ gi.inverse - np.eye(2))) < 1e-12
    assert gi.vtilde_norm == 0.0
    assert np.allclose(gi.Vinv[:, 0, 1], -1) and np.allclose(gi.Vinv[:, 1, 0], 1)
    assert j_consistency(fr) < 1e-14


def _two_torus(a, grid=(16, 16)):
    g = torus_grid(grid)
    v = np.zeros(grid + (4,))
    v[..., 1] = 0.6 + a * np.sin(2 * np.pi * g[..., 1])
    v[..., 3] = a * np.sin(2 * np.pi * g[..., 0])
    return Embedding(FourierMap.from_grid(v, 2), np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))


def test_gram_inverse_neumann():
    sys = SymplecticSystem(4, lambda z, jac: (z, None), pair_J(2), True, (0, 2))
    fr = frames(_two_torus(0.05), sys)
    gi = gram_inverse(fr)
    gram = np.swapaxes(fr.Mtilde, -1, -2) @ fr.J @ fr.Mtilde
    assert np.max(np.abs(gram @ gi.inverse - np.eye(4))) < 1e-12
    with pytest.raises(GeometryDegenerateError):
        gram_inverse(frames(_two_torus(0.3), sys))


def test_symplecticity_and_J(rng):
    m = model_A(0.05)
    pts = np.column_stack([rng.random(20), m.y0 + 0.1 * rng.standard_normal(20), 0.05 * rng.standard_normal((20, 2))])
    assert symplecticity_defect(m.system, pts) < 1e-12
    assert check_J(m.system, pts)


def test_isotropy_and_reducibility_exact():
    m = model_T()
    K = m.seed_torus(N)
    assert isotropy_defect(K, m.system) == 0.0
    red = reducibility(K, m.system, m.omega0)
    assert red["residual"] < 1e-14 and red["B_minus_identity"] < 1e-14


def test_vanishing_check():
    assert vanishing_check(0.0, 1e-3).passed
    with pytest.warns(ExactnessWarning):
        assert not vanishing_check(1e-3, 1e-10, lambda_tol=1e-9).passed
    with pytest.raises(ValueError):
        vanishing_check(0.0, 1.0, exact=False)


def test_vanishing_warns():
    with pytest.warns(ExactnessWarning):
        vanishing_check(1e-2, 1e-8)


def test_translation_map_not_exact():
    sys = translation_map(0.1)
    assert not sys.exact
    z = np.array([[0.2, 0.5]])
    assert np.allclose(sys.map(z), [[0.7, 0.6]])
