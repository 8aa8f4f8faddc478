import json

import numpy as np
import pytest

from whisker.fourier import FourierMap, torus_grid
from whisker.io import format_fourier, parse_fourier, read_torus, write_samples_csv, write_splitting, write_torus


def test_fourier_round_trip_exact(rng):
    vals = rng.standard_normal((16, 3))
    f = FourierMap.from_grid(vals, 1)
    g = parse_fourier(format_fourier(f), (3,))
    assert np.array_equal(g.coeffs, f.coeffs)


def test_matrix_and_two_torus_round_trip(rng):
    f = FourierMap.from_grid(rng.standard_normal((8, 4, 2, 2)), 2)
    g = parse_fourier(format_fourier(f), (2, 2))
    assert np.array_equal(g.coeffs, f.coeffs)


def test_header_and_mode_box():
    f = FourierMap.from_grid(np.cos(2 * np.pi * torus_grid(8)[:, :1]), 1)
    lines = format_fourier(f).splitlines()
    assert lines[0] == "fourier 1 1 8"
    assert [int(ln.split()[0]) for ln in lines[1:]] == list(range(-3, 4))


@pytest.mark.parametrize("text,msg", [("", "header"), ("fourier 1 1 8\n0 1.0\n", "fields"),
                                      ("junk 1 1 8\n", "header")])
def test_malformed(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_fourier(text)


def test_torus_round_trip(tmp_path, model_a_small):
    m, sol = model_a_small
    paths = write_torus(tmp_path / "t", sol, {"family": "A"}, 1e-14)
    assert all(p.exists() for p in paths)
    K, G, meta = read_torus(tmp_path / "t")
    assert np.array_equal(K.periodic.coeffs, sol.K.periodic.coeffs)
    assert np.array_equal(G.coeffs, sol.G.coeffs)
    assert meta["omega"] == [float(sol.omega[0])] and meta["model"] == {"family": "A"}
    assert json.loads((tmp_path / "t.json").read_text())["residual"] == 1e-14


def test_splitting_and_samples(tmp_path, model_a_small):
    _, sol = model_a_small
    files = write_splitting(tmp_path / "s", sol.splitting)
    assert [p.name for p in files] == ["s_s.fourier", "s_c.fourier", "s_u.fourier"]
    Pc = parse_fourier(files[1].read_text(), (4, 4))
    assert np.max(np.abs(Pc.to_grid().reshape(-1, 4, 4) - sol.splitting.proj_c)) < 1e-12
    csv = write_samples_csv(tmp_path / "k.csv", sol.K).read_text().splitlines()
    assert csv[0] == "theta1,K1,K2,K3,K4" and len(csv) == 129
