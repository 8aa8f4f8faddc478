"""Batch driver: ``whisker solve|continue|refine-bundle|verify|report <config>``.

Configs are INI files (see README for the frozen schema).  Exit status is 0 on
success, 2 on a controlled solver failure (or a failed verification) and 1 on
usage errors.  All outputs go to the directory given by ``--out`` (default
``[run] out``, else ``whisker_out`` next to the config).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import re
import shlex
import subprocess
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bundles import Cocycle, estimate_rates, invariance_residual, refine_splitting
from .cohomology import golden_mean, noble
from .errors import WhiskerError
from .fourier import is_power_of_two
from .geometry import SymplecticSystem, flat, pair_J
from .io import read_torus, write_rows_csv, write_samples_csv, write_splitting, write_torus
from .models import build_model
from .newton import NewtonConfig, TorusSolution, condition_report, continue_family, residual_map, solve
from .verify import ALL_CHECKS, format_table, verify_torus

COMMANDS = ("solve", "continue", "refine-bundle", "verify", "report")
EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

SCHEMA = {
    "run": {"out"},
    "model": {"family", "eps", "lam_h", "shear", "mu", "h", "scheme", "rate", "rate_amp", "wind",
              "phase_amp", "plugin", "dim", "exact"},
    "torus": {"omega", "nu", "k_max", "grid", "phase", "file"},
    "solver": {f.name for f in dataclasses.fields(NewtonConfig)},
    "continue": {"parameter", "values", "predictor"},
    "verify": {"torus", "checks", "iterations", "points"},
    "flow": {"times", "defect_tol"},
}
STRING_KEYS = {("model", "family"), ("model", "scheme"), ("model", "plugin"), ("torus", "omega"),
               ("torus", "file"), ("continue", "parameter"), ("continue", "values"),
               ("continue", "predictor"), ("verify", "torus"), ("verify", "checks"), ("flow", "times"),
               ("run", "out"), ("model", "exact")}
INT_KEYS = {("torus", "grid"), ("torus", "k_max"), ("model", "wind"), ("model", "dim"),
            ("verify", "iterations"), ("verify", "points"), ("solver", "max_iter"), ("solver", "dealias"),
            ("solver", "k_max"), ("solver", "N_window"), ("solver", "stagnation_steps")}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------------------
# config


@dataclasses.dataclass
class RunConfig:
    command: str
    path: Path
    sections: dict
    lines: dict

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def where(self, section, key) -> str:
        line = self.lines.get((section, key))
        return f"{self.path}:{line}: [{section}] {key}" if line else f"{self.path}: [{section}] {key}"


def _key_lines(text: str) -> dict:
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
        elif section and s and s[0] not in "#;" and "=" in s:
            out[(section, s.split("=", 1)[0].strip())] = i
    return out


def _convert(cfg_path, lines, section, key, raw):
    where = f"{cfg_path}:{lines.get((section, key), '?')}: [{section}] {key}"
    if (section, key) in STRING_KEYS:
        return raw.strip()
    if section == "solver" and key == "refresh_G":
        if raw.strip().lower() not in ("true", "false", "yes", "no", "1", "0"):
            raise UsageError(f"{where}: expected a boolean, got {raw!r}")
        return raw.strip().lower() in ("true", "yes", "1")
    try:
        return int(raw) if (section, key) in INT_KEYS else float(raw)
    except ValueError:
        kind = "an integer" if (section, key) in INT_KEYS else "a number"
        raise UsageError(f"{where}: expected {kind}, got {raw!r}") from None


def load_config(path, command: str) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"malformed config: {exc}") from None
    lines = _key_lines(text)
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise UsageError(f"{path}: unknown section [{name}]; expected one of {sorted(SCHEMA)}")
        sec = {}
        for key, raw in parser.items(name):
            if key not in SCHEMA[name]:
                raise UsageError(f"{path}:{lines.get((name, key), '?')}: unknown field {key!r} in [{name}]")
            sec[key] = _convert(path, lines, name, key, raw)
        sections[name] = sec
    cfg = RunConfig(command, path, sections, lines)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    grid = cfg.get("torus", "grid")
    if grid is not None and not (grid >= 4 and is_power_of_two(grid)):
        raise UsageError(f"{cfg.where('torus', 'grid')}: grid size must be a power of two >= 4, got {grid}")
    for key, val in cfg.sections.get("solver", {}).items():
        if isinstance(val, float) and key.endswith("tol") and not val > 0:
            raise UsageError(f"{cfg.where('solver', key)}: tolerances must be positive, got {val}")
    if cfg.get("flow", "defect_tol") is not None and not cfg.get("flow", "defect_tol") > 0:
        raise UsageError(f"{cfg.where('flow', 'defect_tol')}: tolerances must be positive")
    if cfg.command == "continue":
        for key in ("parameter", "values"):
            if cfg.get("continue", key) is None:
                raise UsageError(f"{cfg.path}: [continue] {key} is required for the continue command")
    if cfg.command == "verify" and cfg.get("verify", "checks"):
        bad = set(_split_list(cfg.get("verify", "checks"))) - set(ALL_CHECKS)
        if bad:
            raise UsageError(f"{cfg.where('verify', 'checks')}: unknown checks {sorted(bad)}")


def _split_list(text: str) -> list:
    return [s for s in re.split(r"[,\s]+", text.strip()) if s]


def parse_omega(text, where="omega") -> float:
    """'golden', 'noble:a1,a2,...' or a number."""
    if isinstance(text, (int, float)):
        return float(text)
    t = str(text).strip().lower()
    if t == "golden":
        return golden_mean()
    if t.startswith("noble:"):
        try:
            return noble([int(a) for a in _split_list(t[6:].replace(",", " "))])
        except ValueError:
            raise UsageError(f"{where}: malformed continued-fraction prefix {text!r}") from None
    try:
        return float(t)
    except ValueError:
        raise UsageError(f"{where}: expected 'golden', 'noble:a1,...' or a number, got {text!r}") from None


def _parse_values(cfg: RunConfig) -> list:
    raw = cfg.get("continue", "values")
    param = cfg.get("continue", "parameter")
    where = cfg.where("continue", "values")
    m = re.fullmatch(r"\s*linspace\(\s*([^,]+),([^,]+),([^,]+)\)\s*", raw)
    if m:
        try:
            a, b, n = float(m.group(1)), float(m.group(2)), int(m.group(3))
        except ValueError:
            raise UsageError(f"{where}: malformed linspace({raw})") from None
        return [float(v) for v in np.linspace(a, b, n)]
    if param == "omega":
        return [parse_omega(v, where) for v in _split_list(raw)]
    try:
        return [float(v) for v in _split_list(raw)]
    except ValueError:
        raise UsageError(f"{where}: expected a list of numbers, got {raw!r}") from None


def solver_config(cfg: RunConfig) -> NewtonConfig:
    opts = dict(cfg.sections.get("solver", {}))
    for key in ("nu", "k_max"):
        if cfg.get("torus", key) is not None:
            opts.setdefault(key, cfg.get("torus", key))
    try:
        return NewtonConfig(**opts)
    except ValueError as exc:
        raise UsageError(f"{cfg.path}: [solver] {exc}") from None


# ----------------------------------------------------------------------------
# external systems


_OPEN_PLUGINS = []


class PluginProcess:
    """Line protocol: send ``n`` then n lines of points; receive n lines holding
    F(z) followed by DF(z) row-major."""

    def __init__(self, command: str, dim: int):
        self.dim = dim
        try:
            self.proc = subprocess.Popen(shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                         text=True)
        except OSError as exc:
            raise UsageError(f"cannot start plugin {command!r}: {exc}") from None
        _OPEN_PLUGINS.append(self)

    def __call__(self, z, jac):
        z = np.atleast_2d(z)
        lines = [str(z.shape[0])] + [" ".join("%.17g" % v for v in row) for row in z]
        self.proc.stdin.write("\n".join(lines) + "\n")
        self.proc.stdin.flush()
        d = self.dim
        out = np.empty((z.shape[0], d + d * d))
        for i in range(z.shape[0]):
            row = self.proc.stdout.readline().split()
            if len(row) != d + d * d:
                raise WhiskerError(f"plugin returned {len(row)} fields, expected {d + d * d}")
            out[i] = [float(v) for v in row]
        return out[:, :d], (out[:, d:].reshape(-1, d, d) if jac else None)

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)


# ----------------------------------------------------------------------------
# model plumbing


@dataclasses.dataclass
class Problem:
    spec: object  # ModelSpec or None for plugins
    system: object  # SymplecticSystem or FlowSystem
    omega: float
    is_flow: bool
    description: dict


def _model_params(cfg: RunConfig) -> dict:
    return {k: v for k, v in cfg.sections.get("model", {}).items() if k not in ("family", "plugin", "dim", "exact")}


def build_problem(cfg: RunConfig, override: dict | None = None, omega=None) -> Problem:
    model = cfg.sections.get("model", {})
    om = parse_omega(omega if omega is not None else cfg.get("torus", "omega", "golden"), cfg.where("torus", "omega"))
    if "plugin" in model:
        dim = int(model.get("dim", 4))
        proc = PluginProcess(model["plugin"], dim)
        exact = str(model.get("exact", "true")).lower() in ("true", "yes", "1")
        sys_ = SymplecticSystem(dim, proc, pair_J(dim // 2), exact, (0,), name="plugin")
        return Problem(None, sys_, om, False, {"plugin": model["plugin"], "omega": om})
    family = model.get("family")
    if family is None:
        raise UsageError(f"{cfg.path}: [model] family is required (T, A, B or SKEW)")
    params = _model_params(cfg)
    params.update(override or {})
    try:
        spec = build_model(family, omega0=om, **params)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{cfg.path}: [model] {exc}") from None
    is_flow = not isinstance(spec.system, SymplecticSystem)
    return Problem(spec, spec.system, om, is_flow, {"family": family.upper(), "omega": om, **params})


def _grid(cfg: RunConfig, args) -> int:
    n = args.grid if args.grid is not None else cfg.get("torus", "grid", 128)
    if not (n >= 4 and is_power_of_two(n)):
        raise UsageError(f"grid size must be a power of two >= 4, got {n}")
    return int(n)


def _seed(cfg: RunConfig, args, prob: Problem, N: int):
    """Seed torus and splitting: a torus file if given, else the model's flat torus."""
    path = args.seed_torus or cfg.get("torus", "file")
    split = prob.spec.seed_splitting(N) if prob.spec is not None else None
    if path:
        path = _resolve(cfg, path)
        try:
            K, _, _ = read_torus(path)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read seed torus {path}: {exc}") from None
        return K.resize((N,)), split
    if prob.spec is None:
        raise UsageError("plugin systems need a seed torus ([torus] file or --seed-torus)")
    return prob.spec.seed_torus(N, cfg.get("torus", "phase", 0.0)), split


def _resolve(cfg: RunConfig, path) -> Path:
    p = Path(path)
    return p if p.is_absolute() or p.exists() else cfg.path.parent / p


def _map_system(prob: Problem):
    from .flows import time1_map

    return time1_map(prob.system) if prob.is_flow else prob.system


def _solve(prob: Problem, K0, split, config: NewtonConfig, cfg: RunConfig):
    if prob.is_flow:
        from .flows import FLOW_TIMES, solve_flow_torus

        times = [float(t) for t in _split_list(cfg.get("flow", "times", ""))] or list(FLOW_TIMES)
        tol = cfg.get("flow", "defect_tol", 1e-8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol, _ = solve_flow_torus(prob.system, K0, prob.omega, config, split, times, tol)
        return sol
    sys_ = prob.system
    return solve(TorusSolution.seed(K0, sys_, prob.omega, split), sys_, config)


class Output:
    def __init__(self, root: Path, quiet: bool):
        self.root = root
        self.quiet = quiet
        root.mkdir(parents=True, exist_ok=True)

    def say(self, msg: str):
        if not self.quiet:
            print(msg)

    def path(self, name: str) -> Path:
        return self.root / name


def _persist(out: Output, name: str, sol, prob: Problem, sys_, report_name: str | None = None):
    _, res = residual_map(sol.K, sol.lam, sol.G, sol.omega, sys_)
    write_torus(out.path(name), sol, prob.description, res)
    if sol.splitting is not None:
        write_splitting(out.path(f"{name}_splitting"), sol.splitting)
    write_samples_csv(out.path(f"{name}_samples.csv"), sol.K)
    rep = out.path(report_name or f"{name}_report.jsonl")
    rep.write_text(sol.report.to_jsonl() + json.dumps({"summary": sol.report.summary(), "residual": res},
                                                      sort_keys=True, default=float) + "\n")
    return res


def _write_failure(out: Output, name: str, exc):
    report = getattr(exc, "report", None)
    lines = report.to_jsonl() if report is not None else ""
    summary = report.summary() if report is not None else {}
    summary.update(error=type(exc).__name__, message=str(exc))
    out.path(name).write_text(lines + json.dumps({"summary": summary}, sort_keys=True, default=float) + "\n")


# ----------------------------------------------------------------------------
# commands


def cmd_solve(cfg, args, out: Output) -> int:
    prob = build_problem(cfg)
    N = _grid(cfg, args)
    K0, split = _seed(cfg, args, prob, N)
    config = solver_config(cfg)
    try:
        sol = _solve(prob, K0, split, config, cfg)
    except WhiskerError as exc:
        _write_failure(out, "report.jsonl", exc)
        out.say(f"solve failed: {exc}")
        return EXIT_FAIL
    res = _persist(out, "torus", sol, prob, _map_system(prob), "report.jsonl")
    out.say(f"converged in {len(sol.report.records)} steps, residual {res:.3e}, |lambda| {np.max(np.abs(sol.lam)):.3e}")
    return EXIT_OK


def cmd_continue(cfg, args, out: Output) -> int:
    param = cfg.get("continue", "parameter")
    values = _parse_values(cfg)
    predictor = cfg.get("continue", "predictor", "secant")
    if predictor not in ("secant", "previous", "seed"):
        raise UsageError(f"{cfg.where('continue', 'predictor')}: expected secant, previous or seed")
    N = _grid(cfg, args)
    config = solver_config(cfg)

    def problem(p):
        if param == "omega":
            return build_problem(cfg, omega=p)
        if param not in SCHEMA["model"]:
            raise UsageError(f"{cfg.where('continue', 'parameter')}: unknown model parameter {param!r}")
        return build_problem(cfg, {param: p})

    base = problem(values[0])
    K0, split = _seed(cfg, args, base, N)
    sols, failure = [], None
    if predictor == "seed":
        # independent solves from the common seed; WHISKER_THREADS caps the pool
        workers = max(1, int(os.environ.get("WHISKER_THREADS", "1") or 1))

        def run(p):
            pr = problem(p)
            return _solve(pr, K0, split, config, cfg)

        with ThreadPoolExecutor(max_workers=min(workers, len(values))) as pool:
            futures = [pool.submit(run, p) for p in values]
            for p, fut in zip(values, futures):
                try:
                    sols.append(fut.result())
                except WhiskerError as exc:
                    failure = (p, exc)
                    break
    else:
        def family(p):
            pr = problem(p)
            return _map_system(pr), pr.omega

        seed = TorusSolution.seed(K0, _map_system(base), base.omega, split)
        branch = continue_family(seed, family, values, config, predictor=predictor)
        sols = list(branch)
        failure = branch.failure
    rows = []
    for i, (p, sol) in enumerate(zip(values, sols)):
        pr = problem(p)
        _persist(out, f"torus_{i:03d}", sol, pr, _map_system(pr))
        if i > 0:
            prev = sols[i - 1]
            dp = abs(float(sol.omega[0] - prev.omega[0])) if param == "omega" else abs(p - values[i - 1])
            dK = float(np.max(np.abs(sol.K.values() - prev.K.values())))
            rows.append((i, float(values[i - 1]), float(p), dK, dp, dK / dp if dp > 0 else float("nan")))
    write_rows_csv(out.path("lipschitz.csv"), ["index", "param_prev", "param", "dK", "dparam", "ratio"], rows)
    if failure is not None:
        p, exc = failure
        _write_failure(out, f"torus_{len(sols):03d}_report.jsonl", exc)
        out.say(f"continuation stopped at {param} = {p}: {exc}")
        return EXIT_FAIL
    out.say(f"continued over {len(sols)} values of {param}")
    return EXIT_OK


def _load_torus(cfg, args, key=("verify", "torus")):
    path = args.seed_torus or cfg.get(*key) or cfg.get("torus", "file")
    if not path:
        raise UsageError(f"{cfg.path}: no torus file given ([{key[0]}] {key[1]}, [torus] file or --seed-torus)")
    path = _resolve(cfg, path)
    try:
        return read_torus(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read torus {path}: {exc}") from None


def cmd_refine(cfg, args, out: Output) -> int:
    K, _, meta = _load_torus(cfg, args, ("torus", "file"))
    prob = build_problem(cfg, omega=meta["omega"][0])
    if prob.spec is None:
        raise UsageError("refine-bundle needs a model family for the seed bundles")
    sys_ = _map_system(prob)
    coc = Cocycle(sys_.jacobian(flat(K.values(), K.l)), K.grid, np.asarray(meta["omega"]))
    config = solver_config(cfg)
    try:
        split = refine_splitting(coc, prob.spec.seed_splitting(K.grid))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rates = estimate_rates(coc, split, config.N_window)
    except WhiskerError as exc:
        _write_failure(out, "bundle_report.jsonl", exc)
        out.say(f"bundle refinement failed: {exc}")
        return EXIT_FAIL
    write_splitting(out.path("splitting"), split)
    info = {"invariance_residual": invariance_residual(coc, split), "ranks": split.defects()["ranks"],
            **dataclasses.asdict(rates), "certified": rates.certified()}
    out.path("bundle_report.jsonl").write_text(json.dumps(info, sort_keys=True, default=float) + "\n")
    out.say(f"splitting invariance residual {info['invariance_residual']:.3e}; "
            f"mu1 {rates.mu1:.4f} mu2 {rates.mu2:.4f} mu3 {rates.mu3:.4f}")
    return EXIT_OK


def cmd_verify(cfg, args, out: Output) -> int:
    K, G, meta = _load_torus(cfg, args)
    prob = build_problem(cfg, omega=meta["omega"][0])
    sys_ = _map_system(prob)
    checks = _split_list(cfg.get("verify", "checks", "")) or list(ALL_CHECKS)
    if G is None:
        raise UsageError("torus file has no companion _G.fourier file")
    split = prob.spec.seed_splitting(K.grid) if prob.spec is not None else None
    rows = verify_torus(K, meta["lambda"], G, meta["omega"], sys_, split, checks,
                        stored_residual=meta.get("residual"),
                        n_iter=cfg.get("verify", "iterations", 1000), n_points=cfg.get("verify", "points", 16))
    table = format_table(rows)
    out.say(table)
    write_rows_csv(out.path("verify.csv"), ["check", "value", "threshold", "passed", "note"],
                   [(r.name, float(r.value), float(r.threshold), str(r.passed).lower(), r.note) for r in rows])
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


def cmd_report(cfg, args, out: Output) -> int:
    K, G, meta = _load_torus(cfg, args, ("torus", "file"))
    prob = build_problem(cfg, omega=meta["omega"][0])
    sys_ = _map_system(prob)
    split = None
    if prob.spec is not None:
        coc = Cocycle(sys_.jacobian(flat(K.values(), K.l)), K.grid, np.asarray(meta["omega"]))
        try:
            split = refine_splitting(coc, prob.spec.seed_splitting(K.grid))
        except WhiskerError:
            split = None
    sol = TorusSolution(K, np.asarray(meta["lambda"]), np.asarray(meta["omega"]), G, split, None, None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if split is not None:
            rates = estimate_rates(Cocycle(sys_.jacobian(flat(K.values(), K.l)), K.grid, sol.omega), split)
        else:
            rates = None
        cond = condition_report(sol, sys_, rates)
    out.path("condition.json").write_text(json.dumps(cond, indent=1, sort_keys=True, default=float) + "\n")
    for key in sorted(cond):
        val = cond[key]
        out.say(f"{key:<18} {val:.4e}" if isinstance(val, float) else f"{key:<18} {val}")
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "continue": cmd_continue, "refine-bundle": cmd_refine,
            "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="whisker", description="Whiskered invariant tori of exact symplectic maps and flows.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="INI run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed-torus", help="torus file prefix used as the seed (or the torus to check)")
    p.add_argument("--grid", type=int, help="grid size N (power of two)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config, args.command)
        root = Path(args.out) if args.out else Path(cfg.get("run", "out") or cfg.path.parent / "whisker_out")
        out = Output(root, args.quiet)
        return HANDLERS[args.command](cfg, args, out)
    except UsageError as exc:
        print(f"whisker: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        while _OPEN_PLUGINS:
            _OPEN_PLUGINS.pop().close()


if __name__ == "__main__":
    sys.exit(main())
