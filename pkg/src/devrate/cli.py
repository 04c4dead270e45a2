"""Command-line experiment runner.

Each subcommand reads a TOML config, runs one task and writes CSV tables,
SVG plots and a ``manifest.json`` with content hashes into the output
directory.  Example::

    devrate scgf --config ou_fx.toml --out results/ --seed 7
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from . import __version__
from .errors import ConfigError, DevrateError
from .expr import default_variables, field_from_expression
from .grid import Mesh
from .model import DiffusionModel, builtin_model, langevin, overdamped

TASKS = ("lyapunov", "scgf", "rate", "decompose", "sweep")

# Allowed keys per section and their accepted types.  "grid" accepts a list of
# numbers or a {start, stop, step} table.
_NUM = (int, float)
SCHEMA: dict[str, Any] = {
    "task": str,
    "seed": int,
    "model": {
        "name": str,
        "params": dict,
        "potential": str,
        "kind": str,
        "dim": int,
        "gamma": _NUM,
    },
    "mesh": {"lo": (int, float, list), "hi": (int, float, list), "n": (int, list), "scheme": str},
    "observable": {"expr": str},
    "lyapunov": {"theta": _NUM, "epsilon": _NUM, "window": list, "kappas": dict, "q": _NUM},
    "scgf": {
        "thetas": "grid",
        "method": str,
        "override": bool,
        "tol": _NUM,
        "n_replicas": int,
        "T": _NUM,
        "dt": _NUM,
        "resample_every": _NUM,
    },
    "rate": {"thetas": "grid", "a_grid": "grid", "override": bool},
    "decompose": {"perturbations": dict, "autocorrelation": bool, "T": _NUM, "N": int, "dt": _NUM},
    "sweep": {"gammas": "grid", "perturbations": dict},
}

REQUIRED = {
    "lyapunov": [],
    "scgf": ["observable.expr", "scgf.thetas"],
    "rate": ["observable.expr", "rate.thetas", "rate.a_grid"],
    "decompose": ["decompose.perturbations"],
    "sweep": ["sweep.gammas", "sweep.perturbations"],
}


def _check_grid(value, where: str) -> None:
    if isinstance(value, list):
        if not value or not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"field '{where}': expected a non-empty list of numbers")
        return
    if isinstance(value, dict):
        if set(value) != {"start", "stop", "step"}:
            raise ConfigError(f"field '{where}': a range table needs exactly start, stop, step")
        if not all(isinstance(v, _NUM) for v in value.values()) or value["step"] <= 0:
            raise ConfigError(f"field '{where}': start/stop/step must be numbers with step > 0")
        return
    raise ConfigError(f"field '{where}': expected a list or a {{start, stop, step}} table")


def expand_grid(value) -> list[float]:
    """Expand a list or an inclusive ``{start, stop, step}`` range."""
    if isinstance(value, list):
        return [float(v) for v in value]
    n = int(math.floor((value["stop"] - value["start"]) / value["step"] + 1e-9)) + 1
    return [round(value["start"] + k * value["step"], 12) for k in range(n)]


def _validate(data: dict, schema: dict, prefix: str = "") -> None:
    for key, value in data.items():
        where = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown field '{where}'; allowed: {sorted(schema)}")
        rule = schema[key]
        if isinstance(rule, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"field '{where}': expected a table")
            _validate(value, rule, where + ".")
        elif rule == "grid":
            _check_grid(value, where)
        else:
            types = rule if isinstance(rule, tuple) else (rule,)
            if isinstance(value, bool) and bool not in types:
                raise ConfigError(f"field '{where}': expected {_type_names(types)}, got a boolean")
            if not isinstance(value, types):
                raise ConfigError(f"field '{where}': expected {_type_names(types)}, got {type(value).__name__}")


def _type_names(types) -> str:
    return " or ".join(t.__name__ for t in types)


def _lookup(data: dict, dotted: str):
    cur = data
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


@dataclass
class ExperimentConfig:
    """Validated experiment description; round-trips through TOML."""

    data: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, task: Optional[str] = None) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        _validate(data, SCHEMA)
        if task is not None:
            if "task" in data and data["task"] != task:
                raise ConfigError(f"field 'task': config is for '{data['task']}', command is '{task}'")
            data["task"] = task
        elif "task" not in data:
            # infer from the single task section present
            present = [t for t in TASKS if t in data]
            if len(present) == 1:
                data["task"] = present[0]
        if data.get("task") not in TASKS:
            raise ConfigError(f"field 'task': expected one of {list(TASKS)}")
        for req in REQUIRED[data["task"]]:
            if _lookup(data, req) is None:
                raise ConfigError(f"missing required field '{req}' for task '{data['task']}'")
        model = data.get("model", {})
        if "name" not in model and "potential" not in model:
            raise ConfigError("missing required field 'model.name' (or 'model.potential')")
        if "name" in model and "potential" in model:
            raise ConfigError("field 'model': give either 'name' or 'potential', not both")
        return cls(data)

    @classmethod
    def load(cls, path, task: Optional[str] = None) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.from_dict(data, task)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return tomli_w.dumps(self.data)

    @property
    def task(self) -> str:
        return self.data["task"]

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    def section(self, name: str) -> dict:
        return self.data.get(name, {})


# -- building blocks from the config -----------------------------------------------

def build_model(cfg: ExperimentConfig) -> DiffusionModel:
    m = cfg.section("model")
    if "name" in m:
        return builtin_model(m["name"], **m.get("params", {}))
    kind = m.get("kind", "overdamped")
    dim = int(m.get("dim", 1))
    if kind == "overdamped":
        V = field_from_expression(m["potential"], dim, name=m["potential"])
        return overdamped(V)
    if kind == "langevin":
        qs = ["q"] if dim == 1 else [f"q{i}" for i in range(dim)]
        V = field_from_expression(m["potential"], dim, qs, name=m["potential"])
        return langevin(V, float(m.get("gamma", 1.0)), dim)
    raise ConfigError(f"field 'model.kind': expected 'overdamped' or 'langevin', got '{kind}'")


def state_variables(model: DiffusionModel) -> list[str]:
    if model.kind == "langevin":
        d = model.dim // 2
        if d == 1:
            return ["q", "p"]
        return [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)]
    return default_variables(model.dim)


def build_mesh(cfg: ExperimentConfig, model: DiffusionModel) -> Mesh:
    m = cfg.section("mesh")
    lo = m.get("lo", -8.0)
    hi = m.get("hi", 8.0)
    n = m.get("n", 401 if model.dim == 1 else 161)
    return Mesh.box(lo, hi, n, model.dim)


def build_field(text: str, model: DiffusionModel, extra: Sequence[str] = ()):
    names = state_variables(model)
    if not extra:
        return field_from_expression(text, model.dim, names, name=text)
    from .expr import parse_expression
    import sympy

    syms = [sympy.Symbol(v, real=True) for v in list(names) + list(extra)]
    expr = parse_expression(text, list(names) + list(extra))
    fn = sympy.lambdify(syms, expr, "numpy")

    def call(X, *params):
        out = fn(*[X[:, i] for i in range(X.shape[1])], *params)
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    return call


# -- output ------------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return "%.12g" % x


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_svg(path: Path, series: list, xlabel: str, ylabel: str, title: str) -> Path:
    """Minimal line plot; ``series`` is a list of ``(label, xs, ys)``."""
    W, H, L, R, T, B = 560, 400, 70, 20, 40, 50
    pts = [(np.asarray(x, float), np.asarray(y, float)) for _, x, y in series]
    finite = [(x[np.isfinite(y)], y[np.isfinite(y)]) for x, y in pts]
    allx = np.concatenate([x for x, _ in finite]) if finite else np.array([0.0, 1.0])
    ally = np.concatenate([y for _, y in finite]) if finite else np.array([0.0, 1.0])
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def sx(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def sy(y):
        return H - B - (y - y0) / (y1 - y0) * (H - T - B)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{H - B + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>')
        out.append(f'<text x="{L - 6}" y="{sy(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {H / 2:.1f})">{ylabel}</text>')
    for i, ((label, _, _), (x, y)) in enumerate(zip(series, finite)):
        c = colors[i % len(colors)]
        if x.size:
            poly = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{poly}"/>')
        out.append(f'<text x="{W - R - 4}" y="{T + 14 * (i + 1)}" text-anchor="end" font-size="11" fill="{c}">{label}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def write_manifest(out: Path, cfg: ExperimentConfig, files: list) -> Path:
    entries = []
    for p in files:
        data = Path(p).read_bytes()
        entries.append({"path": Path(p).name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    manifest = {"version": __version__, "task": cfg.task, "seed": cfg.seed, "config": cfg.to_dict(),
                "outputs": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- tasks ---------------------------------------------------------------------------

def run_lyapunov(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> list:
    from .lyapunov import LyapunovSpec, langevin_lyapunov_params, lyapunov_report

    model = build_model(cfg)
    sec = cfg.section("lyapunov")
    files = []
    if model.kind == "langevin":
        gamma = model.structure.gamma
        p = langevin_lyapunov_params(1.0, 0.0, gamma, float(sec.get("theta", 0.5)), model.dim // 2)
        rows = [("a", p.a), ("b", p.b), ("C", p.C), ("epsilon", p.epsilon), ("eta", p.eta)]
        files.append(write_csv(out / "lyapunov_summary.csv", ["quantity", "value"], rows))
        return files
    V = model.structure.potential
    spec = LyapunovSpec.exponential(V, float(sec.get("theta", 0.5)),
                                    sec.get("epsilon"))
    kappas = {k: build_field(v, model) for k, v in sec.get("kappas", {}).items()}
    window = tuple(sec.get("window", [4.0, 64.0]))
    rep = lyapunov_report(model, spec, kappas, window, q=sec.get("q"))
    fit = rep.psi_fit
    files.append(write_csv(out / "lyapunov.csv", ["radius", "psi_min"], zip(fit.radii, fit.values)))
    rows = [("psi_exponent", fit.exponent), ("psi_exponent_stderr", fit.stderr), ("confining", rep.confining)]
    if rep.constants is not None:
        rows += [("C1", rep.constants.C1), ("C2", rep.constants.C2)]
    for name, verdict in rep.verdicts.items():
        rows += [(f"kappa[{name}].admissible", verdict.admissible),
                 (f"kappa[{name}].heavy_tail", verdict.heavy_tail)]
    if rep.regime is not None:
        rows += [("regime", rep.regime.regime)]
    files.append(write_csv(out / "lyapunov_summary.csv", ["quantity", "value"], rows))
    files.append(write_svg(out / "lyapunov.svg", [("min Psi on sphere", fit.radii, fit.values)],
                           "radius", "Psi", f"Witten potential growth, {model.name}"))
    return files


def _scgf_curve(cfg: ExperimentConfig, section: str, threads: Optional[int]):
    from .scgf import ScgfCurve, scgf_cloning, scgf_monte_carlo, scgf_spectral

    model = build_model(cfg)
    sec = cfg.section(section)
    f = build_field(cfg.section("observable")["expr"], model)
    thetas = expand_grid(sec["thetas"])
    method = sec.get("method", "spectral")
    if method == "spectral":
        mesh = build_mesh(cfg, model)
        return scgf_spectral(model, f, thetas, mesh, scheme=cfg.section("mesh").get("scheme"),
                             override=bool(sec.get("override", False)), tol=float(sec.get("tol", 1e-10)),
                             threads=threads)
    T = float(sec.get("T", 20.0))
    dt = float(sec.get("dt", 0.01))
    n = int(sec.get("n_replicas", 10000))
    vals, errs = [], []
    for k, th in enumerate(thetas):
        seed = [cfg.seed, k]
        if th == 0.0:
            vals.append(0.0)
            errs.append(0.0)
            continue
        if method == "monte_carlo":
            est = scgf_monte_carlo(model, f, th, n, T, dt, seed, threads=threads)
        elif method == "cloning":
            est = scgf_cloning(model, f, th, n, T, dt, float(sec.get("resample_every", 0.1)), seed,
                               threads=threads)
        else:
            raise ConfigError(f"field '{section}.method': expected spectral, monte_carlo or cloning")
        vals.append(est.estimate)
        errs.append(est.stderr)
    return ScgfCurve(f.name, np.array(thetas), np.array(vals), np.array(errs), [method] * len(thetas),
                     {"T": T, "dt": dt, "n": n})


def run_scgf(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> list:
    curve = _scgf_curve(cfg, "scgf", threads)
    files = [write_csv(out / "scgf.csv", ["theta", "lambda", "stderr", "method"], curve.rows())]
    files.append(write_svg(out / "scgf.svg", [("lambda", curve.thetas, curve.values)], "theta",
                           "lambda(theta)", f"SCGF of {curve.observable}"))
    return files


def run_rate(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> list:
    from .ratefn import double_conjugate_check, legendre_transform

    curve = _scgf_curve(cfg, "rate", threads)
    rate = legendre_transform(curve, expand_grid(cfg.section("rate")["a_grid"]))
    files = [write_csv(out / "scgf.csv", ["theta", "lambda", "stderr", "method"], curve.rows()),
             write_csv(out / "rate.csv", ["a", "I", "is_infinite"], rate.rows())]
    rows = [("a_star", rate.a_star), ("slope_min", rate.slope_range[0]), ("slope_max", rate.slope_range[1]),
            ("double_conjugate_deviation", double_conjugate_check(rate))]
    files.append(write_csv(out / "rate_summary.csv", ["quantity", "value"], rows))
    fa, fi = rate.finite()
    files.append(write_svg(out / "rate.svg", [("I", fa, fi)], "a", "I(a)", f"Rate function of {curve.observable}"))
    return files


def run_decompose(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> list:
    from .decompose import DecompositionContext, autocorrelation_ia, decompose

    model = build_model(cfg)
    mesh = build_mesh(cfg, model)
    sec = cfg.section("decompose")
    ctx = DecompositionContext.build(model, mesh, cfg.section("mesh").get("scheme"))
    X = mesh.points()
    header = ["perturbation", "IS", "IA", "I", "fisher", "poisson_residual", "compatibility_defect"]
    auto = bool(sec.get("autocorrelation", False))
    if auto:
        header += ["IA_autocorrelation", "IA_autocorrelation_stderr"]
    rows, names, totals = [], [], []
    for k, (name, text) in enumerate(sorted(sec["perturbations"].items())):
        v = build_field(text, model).value(X)
        pert = ctx.perturbation(v)
        r = decompose(ctx, pert)
        row = [name, r.I_S, r.I_A, r.total, r.fisher, r.poisson_residual, r.compatibility_defect]
        if auto:
            est = autocorrelation_ia(ctx, pert, float(sec.get("T", 10.0)), int(sec.get("N", 4000)),
                                     float(sec.get("dt", 0.01)), [cfg.seed, k])
            row += [est.estimate, est.stderr]
        rows.append(row)
        names.append(name)
        totals.append(r.total)
    files = [write_csv(out / "decompose.csv", header, rows)]
    files.append(write_svg(out / "decompose.svg", [("I", np.arange(len(totals)), totals)],
                           "perturbation index", "I(nu)", "Rate of each perturbation"))
    return files


def run_sweep(cfg: ExperimentConfig, out: Path, threads: Optional[int]) -> list:
    from .decompose import friction_sweep

    model = build_model(cfg)
    if model.kind != "langevin":
        raise ConfigError("field 'model': the sweep task needs a Langevin model")
    mesh = build_mesh(cfg, model)
    sec = cfg.section("sweep")
    fam = {}
    for name, text in sorted(sec["perturbations"].items()):
        fn = build_field(text, model, extra=("gamma",))
        fam[name] = (lambda g: (lambda X, gamma: g(X, gamma)))(fn)
    rows = friction_sweep(model.structure.potential, fam, expand_grid(sec["gammas"]), mesh,
                          scheme=cfg.section("mesh").get("scheme"), threads=threads)
    keys = ["gamma", "IS", "IA", "I", "gamma_times_I", "I_over_gamma"]
    files = [write_csv(out / "sweep.csv", keys + ["perturbation"],
                       ([r[k] for k in keys] + [r["name"]] for r in rows))]
    series = []
    for name in fam:
        sel = [r for r in rows if r["name"] == name]
        series.append((name, np.log10([r["gamma"] for r in sel]), [r["gamma_times_I"] for r in sel]))
    files.append(write_svg(out / "sweep.svg", series, "log10 gamma", "gamma * I", "Friction sweep"))
    return files


RUNNERS = {"lyapunov": run_lyapunov, "scgf": run_scgf, "rate": run_rate,
           "decompose": run_decompose, "sweep": run_sweep}


def run(cfg: ExperimentConfig, out, threads: Optional[int] = None) -> Path:
    """Execute ``cfg`` and return the manifest path."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = RUNNERS[cfg.task](cfg, out, threads)
    return write_manifest(out, cfg, files)


# -- selftest ----------------------------------------------------------------------

def selftest(stream=None) -> bool:
    """Fast oracle checks; prints one line per check."""
    stream = stream or sys.stdout
    from . import _kernels
    from .decompose import DecompositionContext, decompose
    from .grid import assemble_generator
    from .model import nonreversible_rotational, ornstein_uhlenbeck
    from .ratefn import legendre_transform
    from .scgf import scgf_spectral

    checks = []
    ou = ornstein_uhlenbeck(1.0, 1)
    mesh = Mesh.box(-8, 8, 201, 1)
    curve = scgf_spectral(ou, lambda X: X[:, 0], [-1, -0.5, 0.5, 1], mesh)
    checks.append(("OU scgf = theta^2", float(np.max(np.abs(curve.values - curve.thetas ** 2))) < 1e-3))
    rate = legendre_transform((np.linspace(-1.5, 1.5, 31), np.linspace(-1.5, 1.5, 31) ** 2), [1.0, 2.0])
    checks.append(("Legendre of theta^2", abs(rate.values[0] - 0.25) < 1e-6 and abs(rate.values[1] - 1) < 1e-6))
    gen = assemble_generator(ou, mesh)
    checks.append(("generator rows sum to zero", gen.check()["valid"]))
    ctx = DecompositionContext.build(ou, mesh)
    r = decompose(ctx, lambda X: 2 * X[:, 0] - 2)
    checks.append(("reversible I_A = 0", r.I_A == 0.0 and abs(r.I_S - 1.0) < 1e-2))
    rot = nonreversible_rotational(1.0, 1.0)
    ctx2 = DecompositionContext.build(rot, Mesh.box(-6, 6, 61, 2))
    r2 = decompose(ctx2, lambda X: 0.5 * X[:, 0] - 0.125)
    checks.append(("nonreversible I_A > 0", r2.I_A > 0))
    rng = np.random.default_rng(0)
    vals = rng.random((27, 2))
    pts = rng.random((50, 3)) * 2
    a = _kernels.multilinear_interp(vals, np.zeros(3), np.ones(3), np.array([3, 3, 3]), pts, impl="python")
    b = _kernels.multilinear_interp(vals, np.zeros(3), np.ones(3), np.array([3, 3, 3]), pts)
    checks.append((f"kernel backends agree ({_kernels.BACKEND})", bool(np.allclose(a, b, atol=1e-12))))
    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}", file=stream)
        ok &= bool(passed)
    return ok


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="devrate", description="Large-deviation rate functions of diffusions")
    parser.add_argument("--version", action="version", version=f"devrate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task")
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: ./out-<task>)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: DEVRATE_THREADS)")
    st = sub.add_parser("selftest", help="run quick oracle checks")
    st.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return ConfigError.exit_code
        os.environ["DEVRATE_THREADS"] = str(args.threads)
    try:
        if args.command == "selftest":
            return 0 if selftest() else 1
        cfg = ExperimentConfig.load(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.data["seed"] = args.seed
        out = Path(args.out or f"out-{args.command}")
        manifest = run(cfg, out, args.threads)
        print(manifest)
        return 0
    except DevrateError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
