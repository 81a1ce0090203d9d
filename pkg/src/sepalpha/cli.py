"""Command-line driver: ``sepalpha <command> [--config FILE] [options]``."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .errors import SepError
from .model import ModelParams

COMMANDS = ("simulate", "density", "correlations", "occupation", "spectra", "fit-decay", "verify", "oracle")

_NUM = {"type": "number"}
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "integer", "minimum": 1},
                "lambda_l": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "lambda_r": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "rho_l": {"type": "number", "exclusiveMinimum": 0},
                "rho_r": {"type": "number", "exclusiveMinimum": 0},
                "theta": _NUM,
                "N": {"type": "integer", "minimum": 3},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_end": {"type": "number", "minimum": 0},
                "times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "replicas": {"type": "integer", "minimum": 2},
                "seed": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "init": {"enum": ["admissible", "linear", "flat", "stationary"]},
                "bump_amplitude": _NUM,
                "test_function": {"enum": ["sine", "cosine", "robin", "bump"]},
                "coefficients": {"type": "array", "items": _NUM, "minItems": 1},
                "modes": {"type": "integer", "minimum": 1},
                "grid_points": {"type": "integer", "minimum": 2},
                "thetas": {"type": "array", "items": _NUM, "minItems": 1},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1},
                "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 14}},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
            },
        },
    },
}

DEFAULTS = {
    "model": {"alpha": 2, "lambda_l": 1.0, "lambda_r": 1.0, "rho_l": 0.5, "rho_r": 1.5, "theta": 0.0, "N": 16},
    "run": {"t_end": 0.1, "times": [0.0, 0.05, 0.1], "replicas": 100, "seed": None},
    "task": {
        "init": "admissible",
        "bump_amplitude": 0.4,
        "test_function": "sine",
        "coefficients": [1.0],
        "modes": 64,
        "grid_points": 65,
        "thetas": [-2.0, -0.5, 0.5, 2.0],
        "sizes": [16, 32, 64, 128],
        "criteria": list(range(1, 15)),
    },
    "output": {"dir": ".", "format": "csv"},
}


class UsageError(Exception):
    """Invalid configuration or arguments (exit status 2)."""


# ------------------------------------------------------------------------ config


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def load_config(path: str | None, overrides: dict) -> dict:
    raw = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UsageError(f"config: file not found: {path}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config: invalid JSON ({exc.msg} at line {exc.lineno})")
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise UsageError(f"config field {_path(e)}: {e.message}")
    cfg = _merge(DEFAULTS, raw)
    cfg = _merge(cfg, overrides)
    try:
        model_params(cfg)
    except SepError as exc:
        name = str(exc).split()[0]
        field = f"model.{name}" if name in cfg["model"] else "model"
        raise UsageError(f"config field {field}: {exc}")
    return cfg


def model_params(cfg: dict, **changes) -> ModelParams:
    m = dict(cfg["model"], **changes)
    return ModelParams(m["alpha"], m["lambda_l"], m["lambda_r"], m["rho_l"], m["rho_r"], m["theta"], m["N"])


def config_hash(cfg: dict) -> str:
    """Hash of the fields that determine results (output location excluded)."""
    core = {k: cfg[k] for k in ("model", "run", "task")}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ----------------------------------------------------------------------- output


def _plain(v):
    """Python scalars for JSON; float formatting is repr, hence deterministic."""
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _fmt(v):
    v = _plain(v)
    return repr(v) if isinstance(v, float) else v


class Writer:
    def __init__(self, cfg: dict, command: str):
        self.dir = Path(cfg["output"]["dir"])
        self.format = cfg["output"]["format"]
        self.hash = config_hash(cfg)
        self.command = command
        self.written: list[Path] = []

    def table(self, name: str, header: list[str], rows) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        rows = [[_plain(v) for v in r] for r in rows]
        if self.format == "csv":
            rows = [[_fmt(v) for v in r] for r in rows]
            path = self.dir / f"{name}.csv"
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            path.write_text(buf.getvalue())
        else:
            path = self.dir / f"{name}.json"
            doc = {"config_hash": self.hash, "command": self.command, "columns": header, "rows": rows}
            path.write_text(json.dumps(doc, separators=(",", ":")) + "\n")
        self.written.append(path)
        return path

    def document(self, name: str, payload) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{name}.json"
        doc = {"config_hash": self.hash, "command": self.command, "data": payload}
        path.write_text(json.dumps(doc, indent=1, default=_plain) + "\n")
        self.written.append(path)
        return path


# --------------------------------------------------------------------- commands


def _initial_profile(cfg: dict, p: ModelParams) -> np.ndarray:
    from .fluctuations import TestFunction
    from .moments import admissible_initial_profile, stationary_profile

    kind = cfg["task"]["init"]
    if kind == "admissible":
        amp = cfg["task"]["bump_amplitude"]
        return admissible_initial_profile(TestFunction.bump(0.5, 0.3, amp), p)[1:-1]
    if kind == "linear":
        return np.linspace(p.rho_l, p.rho_r, p.N + 1)[1:-1]
    if kind == "stationary":
        return stationary_profile(p).profile.interior
    return np.full(p.N - 1, 0.5 * (p.rho_l + p.rho_r))


def _times(cfg: dict) -> list[float]:
    ts = sorted(float(t) for t in cfg["run"]["times"])
    t_end = float(cfg["run"]["t_end"])
    if ts[-1] > t_end:
        raise UsageError("config field run.times: entries exceed run.t_end")
    return ts


def _need_seed(cfg: dict) -> int:
    seed = cfg["run"]["seed"]
    if seed is None:
        raise UsageError("config field run.seed: a seed is required for stochastic tasks (or pass --seed)")
    return int(seed)


def _test_function(cfg: dict, p: ModelParams):
    from .fluctuations import TestFunction

    kind, c = cfg["task"]["test_function"], cfg["task"]["coefficients"]
    if kind == "sine":
        return TestFunction.sine(c)
    if kind == "cosine":
        return TestFunction.cosine(c)
    if kind == "robin":
        return TestFunction.robin(c, p.lambda_l, p.lambda_r)
    return TestFunction.bump(amplitude=c[0])


def cmd_simulate(cfg, out: Writer, threads: int) -> int:
    from .kmc import simulate_ensemble

    p = model_params(cfg)
    seed = _need_seed(cfg)
    ens = simulate_ensemble(_initial_profile(cfg, p), _times(cfg), p, cfg["run"]["replicas"], seed, threads=threads)
    rows = (
        (r, float(ens.times[k]), x + 1, int(ens.snapshots[r, k, x]))
        for r in range(ens.replicas)
        for k in range(len(ens.times))
        for x in range(p.N - 1)
    )
    out.table("snapshots", ["replica", "time", "site", "count"], rows)
    return 0


def cmd_density(cfg, out: Writer, threads: int) -> int:
    from .moments import DensitySolver

    p = model_params(cfg)
    s = DensitySolver(_initial_profile(cfg, p), p)
    rows = [(t, x, v) for t in _times(cfg) for x, v in enumerate(s(t).values)]
    out.table("density", ["time", "site", "density"], rows)
    return 0


def cmd_correlations(cfg, out: Writer, threads: int) -> int:
    from .moments import CorrelationField, DensitySolver, evolve_correlation

    p = model_params(cfg)
    s = DensitySolver(_initial_profile(cfg, p), p)
    ts = _times(cfg)
    fields = evolve_correlation(CorrelationField.zeros(p), s, ts, p)
    rows = [(t, int(x), int(y), v) for t, f in zip(ts, fields) for (x, y), v in zip(f.lattice.points, f.values)]
    out.table("correlations", ["time", "x", "y", "phi"], rows)
    return 0


def cmd_occupation(cfg, out: Writer, threads: int) -> int:
    from .walks import occupation_closed_form, occupation_solve

    p = model_params(cfg)
    sol = occupation_solve(p)
    ref = occupation_closed_form(p.N, p.alpha)
    exact = p.theta == 0 and p.lambda_l == 1 and p.lambda_r == 1
    rows = [
        (int(x), int(y), v, ref.at(int(x), int(y)) if exact else "")
        for (x, y), v in zip(sol.lattice.points, sol.values)
    ]
    out.table("occupation", ["x", "y", "solve", "closed_form"], rows)
    return 0


def cmd_spectra(cfg, out: Writer, threads: int) -> int:
    from .spectral import discrete_kernel_matrix, semigroup_apply

    p = model_params(cfg)
    f = _test_function(cfg, p)
    u = np.linspace(0.0, 1.0, cfg["task"]["grid_points"])
    K = cfg["task"]["modes"]
    ts = _times(cfg)
    rows = [(t, float(ui), v) for t in ts for ui, v in zip(u, semigroup_apply(f, t, p, grid=u, K=K))]
    out.table("semigroup", ["time", "u", "value"], rows)
    krows = []
    for t in ts:
        M = discrete_kernel_matrix(t, p.N, p.alpha)
        krows.extend((t, x + 1, y + 1, M[x, y]) for x in range(p.N - 1) for y in range(p.N - 1))
    out.table("kernel", ["time", "x", "y", "value"], krows)
    return 0


def cmd_fit_decay(cfg, out: Writer, threads: int) -> int:
    from .fluctuations import decay_fit, default_bump

    p = model_params(cfg)
    rows = decay_fit(cfg["task"]["thetas"], cfg["task"]["sizes"], p, perturbation=default_bump(cfg["task"]["bump_amplitude"]))
    out.document("decay_fit", rows)
    if out.format == "csv":
        cols = ["theta", "region", "slope", "intercept", "stderr", "expected", "N_list"]
        out.table("decay_fit", cols, [[r[c] if c != "N_list" else " ".join(map(str, r[c])) for c in cols] for r in rows])
    return 0


def cmd_verify(cfg, out: Writer, threads: int) -> int:
    from . import acceptance

    if threads:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    results = acceptance.run(cfg["task"]["criteria"], echo=lambda s: print(s, flush=True))
    out.table(
        "verify",
        ["criterion", "name", "passed", "detail"],
        [(r.number, r.name, int(r.passed), r.detail) for r in results],
    )
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"acceptance failure: criterion {r.number:02d} {r.name}", file=sys.stderr)
    return 1 if failed else 0


def cmd_oracle(cfg, out: Writer, threads: int) -> int:
    from .oracle import binomial_product, build_generator, evolve_distribution, exact_moments

    p = model_params(cfg)
    try:
        gen = build_generator(p)
    except SepError as exc:
        raise UsageError(f"config field model.N: {exc}")
    rho0 = _initial_profile(cfg, p)
    p0 = binomial_product(gen.space, rho0)
    drows, crows = [], []
    for t in _times(cfg):
        m = exact_moments(evolve_distribution(gen, p0, t), gen.space)
        drows.extend((t, x + 1, v) for x, v in enumerate(m.density))
        C = m.correlation(diagonal=True) if p.alpha >= 2 else m.covariance()
        n = p.N - 1
        crows.extend((t, x + 1, y + 1, C[x, y]) for x in range(n) for y in range(x if p.alpha >= 2 else x + 1, n))
    out.table("oracle_density", ["time", "site", "density"], drows)
    out.table("oracle_correlation", ["time", "x", "y", "phi"], crows)
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "density": cmd_density,
    "correlations": cmd_correlations,
    "occupation": cmd_occupation,
    "spectra": cmd_spectra,
    "fit-decay": cmd_fit_decay,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sepalpha", description="boundary-driven SEP(alpha) experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    ap.add_argument("--out-dir", help="output directory (overrides output.dir)")
    ap.add_argument("--format", choices=("csv", "json"), help="output format (overrides output.format)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    if args.seed is not None:
        if args.seed < 0:
            print("sepalpha: error: --seed must be non-negative", file=sys.stderr)
            return 2
        overrides.setdefault("run", {})["seed"] = args.seed
    if args.out_dir is not None:
        overrides.setdefault("output", {})["dir"] = args.out_dir
    if args.format is not None:
        overrides.setdefault("output", {})["format"] = args.format
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if threads < 1:
        print("sepalpha: error: --threads must be positive", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, overrides)
        out = Writer(cfg, args.command)
        status = HANDLERS[args.command](cfg, out, threads)
    except UsageError as exc:
        print(f"sepalpha: error: {exc}", file=sys.stderr)
        return 2
    for path in out.written:
        print(path)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
