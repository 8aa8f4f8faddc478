"""Plain-text persistence: Fourier coefficient files, torus bundles, reports, CSV.

Coefficient files::

    fourier l m N_1 .. N_l
    k_1 .. k_l re_1 im_1 .. re_m im_m
    ...

one line per mode of the truncation box |k_j| < N_j / 2, in lexicographic
order of k; matrix values are flattened row-major.  Floats are written with
17 significant digits so that a write/read cycle is exact.
"""

from __future__ import annotations

import csv
import itertools
import json
from pathlib import Path

import numpy as np

from .fourier import FourierMap, torus_grid
from .geometry import Embedding

FMT = "%.17g"


def _box(grid):
    return [range(-(n // 2 - 1), n // 2) if n > 1 else range(0, 1) for n in grid]


def format_fourier(f: FourierMap) -> str:
    grid = f.grid
    m = int(np.prod(f.shape)) if f.shape else 1
    coeffs = f.coeffs.reshape(grid + (m,))
    lines = ["fourier %d %d %s" % (f.l, m, " ".join(str(n) for n in grid))]
    for k in itertools.product(*_box(grid)):
        c = coeffs[tuple(ki % n for ki, n in zip(k, grid))]
        vals = " ".join(f"{FMT % v.real} {FMT % v.imag}" for v in c)
        lines.append(" ".join(str(ki) for ki in k) + " " + vals)
    return "\n".join(lines) + "\n"


def parse_fourier(text: str, shape=None) -> FourierMap:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0][0] != "fourier":
        raise ValueError("not a coefficient file: missing 'fourier' header")
    head = rows[0]
    l, m = int(head[1]), int(head[2])
    grid = tuple(int(n) for n in head[3 : 3 + l])
    if len(grid) != l:
        raise ValueError("header lists fewer grid sizes than the torus dimension")
    coeffs = np.zeros(grid + (m,), dtype=complex)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != l + 2 * m:
            raise ValueError(f"line {lineno}: expected {l + 2 * m} fields, got {len(row)}")
        k = tuple(int(v) % n for v, n in zip(row[:l], grid))
        vals = np.array(row[l:], dtype=float)
        coeffs[k] = vals[0::2] + 1j * vals[1::2]
    if shape is None:
        shape = (m,)
    shape = tuple(shape)
    if int(np.prod(shape)) != m:
        raise ValueError(f"shape {shape} incompatible with {m} components")
    return FourierMap(coeffs.reshape(grid + shape), l)


def write_fourier(path, f: FourierMap) -> Path:
    path = Path(path)
    path.write_text(format_fourier(f))
    return path


def read_fourier(path, shape=None) -> FourierMap:
    return parse_fourier(Path(path).read_text(), shape)


# ----------------------------------------------------------------------------
# tori


def write_torus(prefix, sol, model: dict | None = None, residual: float | None = None) -> list:
    """Writes <prefix>.fourier (periodic part of K), <prefix>_G.fourier and
    <prefix>.json (frequency, lambda, lift, model)."""
    prefix = Path(prefix)
    paths = [write_fourier(prefix.with_suffix(".fourier"), sol.K.periodic),
             write_fourier(prefix.parent / (prefix.name + "_G.fourier"), sol.G)]
    meta = {
        "omega": [float(w) for w in sol.omega],
        "lambda": [float(v) for v in sol.lam],
        "lift": sol.K.lift.tolist(),
        "grid": list(sol.K.grid),
        "model": model or {},
        "residual": residual,
    }
    meta_path = prefix.with_suffix(".json")
    meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return paths + [meta_path]


def read_torus(prefix):
    """Returns (K, G, meta)."""
    prefix = Path(prefix)
    if prefix.suffix in (".fourier", ".json"):
        prefix = prefix.with_suffix("")
    meta = json.loads(prefix.with_suffix(".json").read_text())
    lift = np.asarray(meta["lift"], dtype=float)
    per = read_fourier(prefix.with_suffix(".fourier"))
    K = Embedding(per, lift)
    gpath = prefix.parent / (prefix.name + "_G.fourier")
    G = read_fourier(gpath, lift.shape) if gpath.exists() else None
    return K, G, meta


def write_splitting(prefix, split) -> list:
    """One coefficient file per projection: <prefix>_s/_c/_u.fourier."""
    prefix = Path(prefix)
    out = []
    for w in "scu":
        out.append(write_fourier(prefix.parent / f"{prefix.name}_{w}.fourier", split.projection(w)))
    return out


def write_samples_csv(path, K: Embedding) -> Path:
    path = Path(path)
    theta = torus_grid(K.grid).reshape(-1, K.l)
    vals = K.values().reshape(-1, K.dim)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"theta{j + 1}" for j in range(K.l)] + [f"K{i + 1}" for i in range(K.dim)])
        for t, v in zip(theta, vals):
            w.writerow([FMT % x for x in t] + [FMT % x for x in v])
    return path


def write_rows_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([FMT % x if isinstance(x, float) else x for x in r])
    return path
