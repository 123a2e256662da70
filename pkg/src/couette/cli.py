"""Batch front end: configuration, sweep orchestration and CSV/JSON artifacts.

Every command reads its parameters from built-in defaults, then an optional
YAML file (``--config``), then command-line flags; flags win.  Artifacts carry
a metadata block with the tool version, a hash of the resolved configuration,
the seed and the grid resolutions, so that identical settings reproduce
identical bytes.
"""
import argparse
import csv
import hashlib
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .errors import ConfigurationError, CouetteError

RNG_NAME = "numpy Philox4x64"


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # float, int, floats, ints, str, choice, path
    default: object = None
    check: str = ""  # positive, nonneg, nonzero or ""
    choices: tuple = ()
    help: str = ""
    ordered: bool = False  # keep list order (paired lists)


def _p(name, kind, default=None, check="", choices=(), help="", ordered=False):
    return Param(name, kind, default, check, tuple(choices), help, ordered)


BUILDERS = ("slip", "nonslip", "coupled", "full")

COMMON = [
    _p("seed", "int", 0, "nonneg", help="64-bit seed of the counter-based generator"),
    _p("jobs", "int", 1, "positive", help="worker processes for independent sweep points"),
]

COMMANDS = {
    "spectrum": (
        "least-damped eigenvalues of one modal operator, with an n vs 2n convergence flag",
        [_p("nu", "floats", [1e-3], "positive"), _p("k", "ints", [1]), _p("l", "ints", [0]),
         _p("bc", "choice", "nonslip", choices=BUILDERS), _p("n", "int", 0, "nonneg",
         help="grid degree; 0 picks the boundary-layer rule"),
         _p("count", "int", 40, "positive"), _p("tol", "float", 1e-6, "positive")]),
    "resolvent-sweep": (
        "sup over lambda of a resolvent norm on the slip problem, fitted against nu",
        [_p("nu", "floats", [1e-2, 1e-3, 1e-4], "positive"), _p("k", "ints", [1]),
         _p("l", "ints", [0]),
         _p("quantity", "choice", "w_l2",
            choices=("w_l2", "dw_l2", "w_l1", "ylam_w", "u_l2", "combination")),
         _p("a", "float", 0.0, "nonneg"), _p("factor", "float", 10.0, "positive")]),
    "neumann-sweep": (
        "boundary-data exponents of the slip problem and clamped-problem ratios",
        [_p("nu", "floats", [1e-2, 1e-3, 1e-4], "positive"), _p("k", "int", 1, "nonzero"),
         _p("l", "int", 0), _p("a", "float", 0.0, "nonneg"),
         _p("factor", "float", 10.0, "positive"), _p("ensemble", "int", 4, "positive")]),
    "airy-check": (
        "measured strip widths, k0, the omega bound and the cocycle identity",
        [_p("L", "floats", [1.0, 2.0, 4.0, 8.0], "positive"),
         _p("samples", "int", 200, "positive")]),
    "corrector-bounds": (
        "L-exponents of the boundary-corrector norm families",
        [_p("L", "floats", [5.0, 10.0, 20.0, 50.0], "positive"), _p("k", "int", 1, "nonzero"),
         _p("l", "int", 0), _p("a", "float", 0.0, "nonneg"),
         _p("alpha", "floats", [1.0], "positive"), _p("beta", "floats", [1.0], "positive"),
         _p("factor", "float", 10.0, "positive")]),
    "evolve": (
        "linear evolution of one mode, norm time series",
        [_p("nu", "float", 1e-2, "positive"), _p("k", "int", 1), _p("l", "int", 0),
         _p("bc", "choice", "slip", choices=("slip", "nonslip")), _p("n", "int", 0, "nonneg"),
         _p("T", "float", 50.0, "positive"), _p("dt", "float", 0.1, "positive"),
         _p("scheme", "choice", "exact", choices=("exact", "cn")),
         _p("save_every", "int", 1, "positive")]),
    "damping": (
        "inviscid transport of (1 - y^2)^p vorticity and the velocity decay exponents",
        [_p("k", "int", 1, "nonzero"), _p("n", "int", 1024, "positive"),
         _p("p", "int", 4, "positive"), _p("T", "float", 200.0, "positive"),
         _p("samples", "int", 400, "positive")]),
    "dissipation-fit": (
        "decay rate of nonzero-mode vorticity against nu",
        [_p("nu", "floats", [1e-3, 1e-4, 1e-5], "positive"), _p("k", "int", 1),
         _p("l", "int", 0), _p("kind", "choice", "slip", choices=("slip", "nonslip")),
         _p("factor", "float", 10.0, "positive")]),
    "lap-check": (
        "limiting-absorption ratios of the Rayleigh problem over a random ensemble",
        [_p("alpha", "float", 1.0, "positive"),
         _p("imc", "floats", [1e-1, 1e-2, 1e-3, 1e-4], "positive"),
         _p("ensemble", "int", 20, "positive"), _p("n", "int", 64, "positive")]),
    "gp-check": (
        "semigroup bound exp(-t Psi + pi/2) against the measured semigroup norm",
        [_p("nu", "floats", [1e-2, 1e-3], "positive"), _p("k", "ints", [1, 2]),
         _p("l", "int", 0), _p("samples", "int", 41, "positive"),
         _p("horizon", "float", 10.0, "positive",
            help="largest t in units of 1/Psi"),
         _p("factor", "float", 10.0, "positive")]),
    "dns": (
        "nonlinear run from the default perturbation, energy and diagnostic series",
        [_p("nu", "float", 1e-2, "positive"), _p("amplitude", "float", 1e-2, "nonneg"),
         _p("nx", "int", 16, "positive"), _p("ny", "int", 32, "positive"),
         _p("nz", "int", 16, "positive"), _p("T", "float", 10.0, "positive"),
         _p("dt", "float", 0.01, "positive"), _p("save_every", "int", 10, "positive"),
         _p("checkpoint", "path", None), _p("restart", "path", None)]),
    "threshold": (
        "transition threshold A*(nu) by bisection of the classifier",
        [_p("nu", "floats", [2e-3, 1e-3, 5e-4], "positive"), _p("nx", "int", 16, "positive"),
         _p("ny", "int", 32, "positive"), _p("nz", "int", 16, "positive"),
         _p("budget", "int", 16, "positive"), _p("lower", "float", None, "positive"),
         _p("upper", "float", None, "positive"), _p("dt", "float", None, "positive"),
         _p("tolerance", "float", 0.1, "positive")]),
    "beta-fit": (
        "fit A* ~ C nu^beta from a threshold table or explicit pairs",
        [_p("input", "path", None), _p("nu", "floats", None, "positive", ordered=True),
         _p("astar", "floats", None, "positive", ordered=True)]),
}


def _params(command):
    return COMMANDS[command][1] + COMMON


def _check(name, value, p, where=""):
    def bad(msg):
        raise ConfigurationError(f"field '{name}'{where}: {msg}")

    if value is None:
        return None
    if p.kind in ("floats", "ints"):
        if not isinstance(value, (list, tuple)):
            value = [value]
        if len(value) == 0:
            bad("list must be nonempty")
        out = [_check(name, v, Param(name, p.kind[:-1], check=p.check), where) for v in value]
        # sweep lists are sets; sorting keeps hashes and row order canonical
        return out if p.ordered else sorted(out)
    if p.kind in ("str", "path"):
        return str(value)
    if p.kind == "choice":
        if value not in p.choices:
            bad(f"must be one of {', '.join(p.choices)}, got {value!r}")
        return value
    try:
        if isinstance(value, bool):
            raise TypeError
        num = float(value)
        if p.kind == "int":
            if num != int(num):
                raise TypeError
            num = int(num)
    except (TypeError, ValueError, OverflowError):
        bad(f"expected {'an integer' if p.kind == 'int' else 'a number'}, got {value!r}")
    if not math.isfinite(num):
        bad("must be finite")
    if p.check == "positive" and not num > 0:
        bad(f"must be > 0, got {value!r}")
    if p.check == "nonneg" and not num >= 0:
        bad(f"must be >= 0, got {value!r}")
    if p.check == "nonzero" and num == 0:
        bad("must be nonzero")
    if p.kind == "int" and p.name == "seed" and num >= 2**64:
        bad("must fit in 64 bits")
    return num


def load_config(path, command):
    """Flattened ``{name: (value, line)}`` from a YAML file.

    Nested mappings are merged into the top level; a mapping named after
    another command is skipped, so one file can hold several commands.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from exc
    if root is None:
        return {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigurationError(f"config {path}: top level must be a mapping")
    loader = yaml.SafeLoader("")
    out = {}

    def walk(node):
        for knode, vnode in node.value:
            key = str(knode.value).replace("-", "_")
            line = knode.start_mark.line + 1
            if isinstance(vnode, yaml.MappingNode):
                if key in COMMANDS and key != command:
                    continue
                walk(vnode)
                continue
            value = loader.construct_object(vnode, deep=True)
            if key == "command":
                if value != command:
                    raise ConfigurationError(
                        f"field 'command' (line {line} of {path}): config is for {value!r}")
                continue
            out[key] = (value, line)

    walk(root)
    return out


def resolve(command, flags, config_path=None):
    """Defaults < config file < flags, validated field by field."""
    specs = {p.name: p for p in _params(command)}
    values = {name: (p.default, "") for name, p in specs.items()}
    if config_path:
        for key, (value, line) in load_config(config_path, command).items():
            if key not in specs:
                raise ConfigurationError(f"field '{key}' (line {line} of {config_path}): unknown "
                                         f"for command {command}")
            values[key] = (value, f" (line {line} of {config_path})")
    for key, value in flags.items():
        if value is not None:
            values[key] = (value, " (command line)")
    return {key: _check(key, value, specs[key], where) for key, (value, where) in values.items()}


# ---------------------------------------------------------------------------
# artifacts

@dataclass
class Artifact:
    kind: str  # csv or json
    meta: dict = field(default_factory=dict)
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    result: dict = field(default_factory=dict)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".16e")
    return str(v)


def _schema(v):
    if isinstance(v, (bool, np.bool_)):
        return "bool"
    if isinstance(v, (int, np.integer)):
        return "int"
    if isinstance(v, (float, np.floating)):
        return "float"
    return "str"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def config_hash(command, params):
    # jobs changes scheduling only, never the numbers
    body = {k: v for k, v in params.items() if k != "jobs"}
    text = json.dumps({"command": command, "params": _jsonable(body)}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def render(art):
    """Text of an artifact; CSV gets ``# key: value`` metadata lines, a header and a schema row."""
    if art.kind == "json":
        return json.dumps(_jsonable({"metadata": art.meta, "result": art.result}),
                          indent=2, sort_keys=True) + "\n"
    lines = [f"# {key}: {json.dumps(_jsonable(art.meta[key]), sort_keys=True)}"
             for key in sorted(art.meta)]
    buf = _Lines()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(art.columns)
    w.writerow([_schema(v) for v in art.rows[0]] if art.rows else ["str"] * len(art.columns))
    for row in art.rows:
        w.writerow([_fmt(v) for v in row])
    return "\n".join(lines) + "\n" + "".join(buf.parts)


class _Lines:
    def __init__(self):
        self.parts = []

    def write(self, s):
        self.parts.append(s)


def read_csv(path):
    """``(metadata, rows)`` of an artifact written by :func:`render`; rows are typed dicts."""
    meta, body = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, val = line[2:].partition(": ")
                meta[key] = json.loads(val)
            elif line.strip():
                body.append(line)
    reader = list(csv.reader(body))
    if len(reader) < 2:
        raise ConfigurationError(f"{path}: missing header or schema row")
    cols, types = reader[0], reader[1]
    conv = {"float": float, "int": int, "bool": lambda s: s == "true", "str": str}
    rows = [{c: conv[t](v) for c, t, v in zip(cols, types, r)} for r in reader[2:]]
    return meta, rows


# ---------------------------------------------------------------------------
# sweep fan-out

def _tag(exc, key):
    exc.args = (f"{exc.args[0] if exc.args else exc} (sweep point {key})",) + tuple(exc.args[1:])
    return exc


def _guarded(args):
    func, point = args
    try:
        return func(point)
    except CouetteError as exc:
        raise _tag(exc, _key_text(point))


def _key_text(point):
    return ", ".join(f"{k}={v}" for k, v in point.items())


def fan_out(func, points, jobs):
    """Evaluate ``func`` on every point; results come back sorted by the point key."""
    points = sorted(points, key=lambda p: tuple(p.values()))
    if jobs <= 1 or len(points) <= 1:
        results = [_guarded((func, p)) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as pool:
            results = list(pool.map(_guarded, [(func, p) for p in points]))
    return list(zip(points, results))


def _fit_meta(fit):
    return {"slope": fit.slope, "constant": fit.constant, "residual": fit.residual}


# ---------------------------------------------------------------------------
# commands

def _builder(bc):
    from . import modal_ops as M
    return {"slip": M.build_os_slip, "nonslip": M.build_os_nonslip,
            "coupled": M.build_coupled_u2_omega2, "full": M.build_full_linearized}[bc]


def _spectrum_point(p):
    from .chebgrid import build_grid
    from .modal_ops import Mode, required_n

    mode = Mode(p["k"], p["l"], p["nu"])
    n = p["n"] or required_n(p["k"] if p["k"] else 1, p["nu"])
    build = _builder(p["bc"])
    mu = build(build_grid(n), mode).eigenvalues()[: p["count"]]
    fine = build(build_grid(2 * n), mode).eigenvalues()
    dist = np.array([np.min(np.abs(fine - m)) for m in mu])
    ok = dist <= p["tol"] * np.maximum(1.0, np.abs(mu))
    return n, mu, ok


def cmd_spectrum(P):
    pts = [{"nu": nu, "k": k, "l": ell, "bc": P["bc"], "n": P["n"], "count": P["count"],
            "tol": P["tol"]} for nu in P["nu"] for k in P["k"] for ell in P["l"]]
    rows, grids = [], []
    for p, (n, mu, ok) in fan_out(_spectrum_point, pts, P["jobs"]):
        grids.append([n, 2 * n])
        for i, (m, c) in enumerate(zip(mu, ok)):
            rows.append([p["nu"], p["k"], p["l"], n, i, m.real, m.imag, bool(c)])
    return Artifact("csv", {"grids": grids, "eigenvalue_convention": "x ~ exp(-mu t)"},
                    ["nu", "k", "l", "n", "index", "re", "im", "converged"], rows)


def _resolvent_point(p):
    from .chebgrid import build_grid
    from .modal_ops import Mode, build_os_slip, required_n
    from .resolvent import sup_lambda

    n = required_n(p["k"], p["nu"], factor=p["factor"])
    op = build_os_slip(build_grid(n), Mode(p["k"], p["l"], p["nu"], p["a"]))
    s, lam = sup_lambda(op, p["quantity"], a=p["a"])
    return n, s, lam


def cmd_resolvent_sweep(P):
    from .fitting import fit_power_law

    pts = [{"k": k, "l": ell, "nu": nu, "quantity": P["quantity"], "a": P["a"],
            "factor": P["factor"]} for k in P["k"] for ell in P["l"] for nu in P["nu"]]
    res = fan_out(_resolvent_point, pts, P["jobs"])
    rows = [[p["nu"], p["k"], p["l"], n, s, lam] for p, (n, s, lam) in res]
    fits = {}
    for k in sorted(set(P["k"])):
        for ell in sorted(set(P["l"])):
            sel = [(r[0], r[4]) for r in rows if r[1] == k and r[2] == ell]
            if len(sel) >= 3:
                fits[f"k={k},l={ell}"] = _fit_meta(fit_power_law(*zip(*sel)))
    return Artifact("csv", {"grids": sorted({r[3] for r in rows}), "fits": fits},
                    ["nu", "k", "l", "n", "sup", "lam_at_max"], rows)


def cmd_neumann_sweep(P):
    from .modal_ops import required_n
    from .resolvent import neumann_estimates

    fits = neumann_estimates(P["nu"], P["k"], P["l"], P["a"], P["factor"],
                             ensemble=P["ensemble"], seed=P["seed"])
    rows = [[f.label, x, y] for f in fits for x, y in f.samples]
    meta = {"grids": [required_n(P["k"], nu, factor=P["factor"]) for nu in sorted(P["nu"])],
            "fits": {f.label: _fit_meta(f) for f in fits}}
    meta.update({k: v for k, v in fits[0].meta.items() if k == "direct_check_rel_err"})
    return Artifact("csv", meta, ["label", "nu", "value"], rows)


def cmd_airy_check(P):
    from . import airy

    strips = airy.measure_strips()
    k0 = airy.measure_k0(P["L"])
    rng = np.random.Generator(np.random.Philox(P["seed"]))
    m = P["samples"]
    z = rng.uniform(-30, 30, m) + 1j * rng.uniform(-2, strips["delta1"] or 0.0, m)
    x, xp = rng.uniform(0, 10, m), rng.uniform(0, 10, m)
    cocycle = np.abs(airy.omega_ratio(z, x) * airy.omega_ratio(z + x, xp)
                     - airy.omega_ratio(z, x + xp))
    bound = np.abs(airy.omega_ratio(z, x)) * np.exp(x / 3)
    result = {"delta0": strips["delta0"], "delta1": strips["delta1"], "k0": k0["k0"],
              "k0_margins": dict(zip(k0["L"], k0["margin"])),
              "strip_constants": {k: v for k, v in strips.items() if k not in ("delta0", "delta1")},
              "cocycle_max_error": float(cocycle.max()),
              "omega_bound_max_ratio": float(bound.max()), "samples": m}
    return Artifact("json", {}, result=result)


def cmd_corrector_bounds(P):
    from . import airy
    from .modal_ops import required_n

    try:
        fits = airy.verify_corrector_bounds(P["L"], P["k"], P["l"], P["a"], tuple(P["alpha"]),
                                            tuple(P["beta"]), P["factor"])
    except ValueError as exc:
        if isinstance(exc, CouetteError):
            raise
        raise ConfigurationError(f"field 'L': {exc}") from exc
    k0 = airy.measure_k0(P["L"], P["k"], P["l"], P["a"], factor=P["factor"])
    rows = [[f.label, x, y] for f in fits for x, y in f.samples]
    meta = {"grids": [required_n(P["k"], abs(P["k"]) / L**3, factor=P["factor"])
                      for L in P["L"]],
            "fits": {f.label: _fit_meta(f) for f in fits}, "k0": k0["k0"]}
    return Artifact("csv", meta, ["label", "x", "value"], rows)


def cmd_evolve(P):
    from .chebgrid import build_grid
    from .evolve import _default_initial, integrate_linear
    from .modal_ops import Mode, required_n

    n = P["n"] or required_n(P["k"] if P["k"] else 1, P["nu"])
    op = _builder(P["bc"])(build_grid(n), Mode(P["k"], P["l"], P["nu"]))
    tr = integrate_linear(op, _default_initial(op), P["T"], P["dt"], scheme=P["scheme"],
                          save_every=P["save_every"])
    keys = sorted(tr.norm_series)
    rows = [[t] + [tr.norm_series[k][j] for k in keys] for j, t in enumerate(tr.times)]
    return Artifact("csv", {"grids": [n]}, ["t"] + keys, rows)


def cmd_damping(P):
    from .chebgrid import build_grid
    from .evolve import inviscid_damping_run

    g = build_grid(P["n"])
    times = np.linspace(0.0, P["T"], P["samples"] + 1)
    out = inviscid_damping_run(g, P["k"], (1 - g.points**2) ** P["p"], P["T"], times=times,
                               fit_window=(10.0, P["T"]))
    rows = [[t, u, u2] for t, u, u2 in zip(out["times"], out["u"], out["u2"])]
    meta = {"grids": [P["n"]], "fits": {"u": _fit_meta(out["u_fit"]),
                                        "u2": _fit_meta(out["u2_fit"])}}
    return Artifact("csv", meta, ["t", "u_l2", "u2_l2"], rows)


def cmd_dissipation_fit(P):
    from .evolve import enhanced_dissipation_fit
    from .modal_ops import required_n

    fit = enhanced_dissipation_fit(P["nu"], P["k"], P["l"], P["kind"], factor=P["factor"])
    rows = [[x, y] for x, y in fit.samples]
    meta = {"grids": [required_n(P["k"] if P["k"] else 1, nu, factor=P["factor"])
                      for nu in P["nu"]], "fits": {fit.label: _fit_meta(fit)}}
    return Artifact("csv", meta, ["nu", "rate"], rows)


def _lap_point(p):
    from .chebgrid import build_grid
    from .resolvent import lap_ensemble

    out = lap_ensemble(build_grid(p["n"]), p["alpha"], [p["imc"]], count=p["ensemble"],
                       seed=p["seed"])
    return out[p["imc"]]


def cmd_lap_check(P):
    pts = [{"imc": c, "alpha": P["alpha"], "n": P["n"], "ensemble": P["ensemble"],
            "seed": P["seed"]} for c in P["imc"]]
    res = fan_out(_lap_point, pts, P["jobs"])
    table = [{"imc": p["imc"], "r1": r1, "r2": r2} for p, (r1, r2) in res]
    r1 = np.array([t["r1"] for t in table])
    r2 = np.array([t["r2"] for t in table])
    result = {"ratios": table, "max_r1": float(r1.max()), "max_r2": float(r2.max()),
              "variation_r1": float(r1.max() / r1.min()) if r1.min() > 0 else float("inf"),
              "variation_r2": float(r2.max() / r2.min()) if r2.min() > 0 else float("inf"),
              "finite": bool(np.all(np.isfinite(r1)) and np.all(np.isfinite(r2)))}
    return Artifact("json", {"grids": [P["n"]]}, result=result)


def _gp_point(p):
    from .chebgrid import build_grid
    from .modal_ops import Mode, build_os_slip, required_n
    from .resolvent import psi_estimate, semigroup_bound_check

    n = required_n(p["k"], p["nu"], factor=p["factor"])
    op = build_os_slip(build_grid(n), Mode(p["k"], p["l"], p["nu"]))
    psi = psi_estimate(op)
    t = np.linspace(0.0, p["horizon"] / psi, p["samples"])
    return n, psi, semigroup_bound_check(op, t, psi)


def cmd_gp_check(P):
    pts = [{"nu": nu, "k": k, "l": P["l"], "samples": P["samples"], "horizon": P["horizon"],
            "factor": P["factor"]} for nu in P["nu"] for k in P["k"]]
    res = fan_out(_gp_point, pts, P["jobs"])
    rows = [[p["nu"], p["k"], p["l"], n, psi, margin, margin >= -1e-8]
            for p, (n, psi, margin) in res]
    return Artifact("csv", {"grids": [r[3] for r in rows]},
                    ["nu", "k", "l", "n", "psi", "margin", "holds"], rows)


def cmd_dns(P):
    from . import dns

    if P["restart"]:
        state = dns.load_checkpoint(P["restart"])
        if state.nu != P["nu"]:
            state = dns.State(state.u, state.time, P["nu"], state.grid)
    else:
        grid = dns.make_grid(P["nx"], P["ny"], P["nz"])
        state = dns.new_state(grid, P["amplitude"] * dns.default_perturbation(grid), P["nu"])
    g = state.grid
    final, rec = dns.run(state, P["T"], P["dt"], save_every=P["save_every"],
                         history=dns.DiagnosticHistory())
    if P["checkpoint"]:
        dns.save_checkpoint(P["checkpoint"], final)
    keys = list(dns.EnergyDiagnostics.__dataclass_fields__)[1:]
    rows = [[t, e, nz] + [getattr(d, k) for k in keys]
            for t, e, nz, d in zip(rec.times, rec.energy, rec.nonzero, rec.diagnostics)]
    meta = {"grids": [[g.nx, g.n1, g.nz]], "dt": rec.dt}
    return Artifact("csv", meta, ["t", "energy", "nonzero_l2"] + keys, rows)


def cmd_threshold(P):
    from . import dns

    bracket = None
    if P["lower"] is not None or P["upper"] is not None:
        if P["lower"] is None or P["upper"] is None:
            raise ConfigurationError("field 'lower'/'upper': give both ends of the bracket")
        bracket = (P["lower"], P["upper"])
    rows = []
    for nu in sorted(P["nu"]):
        try:
            r = dns.threshold_bisect(nu, budget=P["budget"], bracket=bracket,
                                     dims=(P["nx"], P["ny"], P["nz"]), dt=P["dt"],
                                     jobs=P["jobs"], tolerance=P["tolerance"])
        except CouetteError as exc:
            raise _tag(exc, f"nu={nu}")
        rows.append([nu, r.a_star, r.lower, r.upper, len(r.probes)])
    meta = {"grids": [[P["nx"], P["ny"] + 1, P["nz"]]]}
    if len(rows) >= 3:
        meta["fits"] = {"beta": _fit_meta(dns.fit_beta([(r[0], r[1]) for r in rows]))}
    return Artifact("csv", meta, ["nu", "a_star", "lower", "upper", "probes"], rows)


def cmd_beta_fit(P):
    from .dns import fit_beta

    if P["input"]:
        meta, rows = read_csv(P["input"])
        pairs = [(r["nu"], r["a_star"]) for r in rows]
        source = {"input": P["input"], "input_config_hash": meta.get("config_hash")}
    else:
        if not P["nu"] or not P["astar"] or len(P["nu"]) != len(P["astar"]):
            raise ConfigurationError("field 'astar': give --input or equal-length --nu and --astar")
        pairs = list(zip(P["nu"], P["astar"]))
        source = {}
    fit = fit_beta(pairs)
    result = {"beta": fit.slope, "constant": fit.constant, "residual": fit.residual,
              "pairs": [list(p) for p in sorted(pairs)]}
    return Artifact("json", source, result=result)


RUNNERS = {
    "spectrum": cmd_spectrum, "resolvent-sweep": cmd_resolvent_sweep,
    "neumann-sweep": cmd_neumann_sweep, "airy-check": cmd_airy_check,
    "corrector-bounds": cmd_corrector_bounds, "evolve": cmd_evolve, "damping": cmd_damping,
    "dissipation-fit": cmd_dissipation_fit, "lap-check": cmd_lap_check, "gp-check": cmd_gp_check,
    "dns": cmd_dns, "threshold": cmd_threshold, "beta-fit": cmd_beta_fit,
}


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(prog="couette", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"couette {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (desc, params) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc)
        sp.add_argument("--config", help="YAML file with parameters; flags override it")
        sp.add_argument("--out", help="artifact path (default: standard output)")
        for p in params + COMMON:
            flag = "--" + p.name.replace("_", "-")
            kw = {"dest": p.name, "default": None, "help": p.help or None}
            if p.kind in ("floats", "ints"):
                kw["nargs"] = "+"
            if p.kind == "choice":
                kw["choices"] = p.choices
            sp.add_argument(flag, **kw)
    return parser


def _flag_values(ns, command):
    return {p.name: getattr(ns, p.name) for p in _params(command)}


def execute(command, params):
    """Run one command on validated parameters and return its artifact."""
    art = RUNNERS[command](params)
    art.meta.update({"tool": "couette", "version": __version__, "command": command,
                     "config_hash": config_hash(command, params), "seed": params["seed"],
                     "rng": RNG_NAME,
                     "config": {k: v for k, v in params.items() if k != "jobs"}})
    return art


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        params = resolve(ns.command, _flag_values(ns, ns.command), ns.config)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            art = execute(ns.command, params)
        text = render(art)
        if ns.out:
            with open(ns.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except CouetteError as exc:
        print(f"couette {ns.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"couette {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"couette {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
