"""Command-line entry point: config parsing, pipelines and output files.

Config files are ``key = value`` lines with ``#`` comments.  Output is a
directory holding CurveCSV files (header ``theta,c1,c2,...``, 17 significant
digits, ``N+1`` rows with the last repeating ``theta = 0``), a ``manifest.txt``
of ``key=value`` lines and an SVG plot per curve.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 validation
threshold failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint import AdjointError, OracleUnavailable
from .adjoint import compute_prc
from .floquet import FloquetError, floquet_divergence, monodromy_poincare
from .models import PARAM_DEFAULTS, ModelId, default_guess, integrator_defaults, make_model, model_field
from .odecore import EventNotFound, IntegrationError
from .orbit import OrbitError, find_periodic_orbit
from .reduce import ControlSignal, ReducedState, ReductionError, simulate_reduced
from . import validate as V

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "read_control_csv",
    "write_curve_csv",
    "read_curve_csv",
    "write_manifest",
    "read_manifest",
    "write_svg",
    "run",
    "main",
]

COMMANDS = ("orbit", "prc", "irc", "floquet", "reduce-sim", "validate", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4
SOLVER_ERRORS = (IntegrationError, EventNotFound, OrbitError, FloquetError, AdjointError,
                 OracleUnavailable, ReductionError, FloatingPointError)


class ConfigError(ValueError):
    pass


def _to_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in s.replace(",", " ").split())


# run-level keys: name -> (parser, default)
RUN_KEYS = {
    "command": (str, "orbit"),
    "n": (int, None),
    "rtol": (float, None),
    "atol": (float, None),
    "extended": (_to_bool, None),
    "output": (str, "out"),
    "control": (str, None),
    "t_end": (float, None),
    "theta0": (float, 0.0),
    "psi0": (float, 0.0),
    "delta": (float, V.DEFAULT_BOX_DELTA),
    "sweep_param": (str, None),
    "sweep_values": (_floats, None),
    "sweep_command": (str, "irc"),
    "jobs": (int, 1),
    "irc_v": (_floats, None),
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, tuple):
        return ", ".join(_fmt(float(x)) for x in v)
    return str(v)


@dataclass
class RunConfig:
    """Fully resolved run settings.

    ``params`` holds every model parameter (defaults filled in);
    ``provenance`` maps each key to ``default``, ``file`` or ``flag`` and is
    ignored in equality.
    """

    model: str
    params: dict
    command: str = "orbit"
    n: int | None = None
    rtol: float | None = None
    atol: float | None = None
    extended: bool | None = None
    output: str = "out"
    control: str | None = None
    t_end: float | None = None
    theta0: float = 0.0
    psi0: float = 0.0
    delta: float = V.DEFAULT_BOX_DELTA
    sweep_param: str | None = None
    sweep_values: tuple | None = None
    sweep_command: str = "irc"
    jobs: int = 1
    irc_v: tuple | None = None
    provenance: dict = field(default_factory=dict, compare=False)

    def items(self):
        yield "model", self.model
        for key in RUN_KEYS:
            val = getattr(self, key)
            if val is not None:
                yield key, val
        for key, val in self.params.items():
            yield key, val

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.items())

    def integrator(self):
        cfg = integrator_defaults(self.make_model())
        changes = {k: getattr(self, k) for k in ("rtol", "atol", "extended") if getattr(self, k) is not None}
        return cfg.replace(**changes) if changes else cfg

    def make_model(self):
        return make_model(self.model, **self.params)


def _split_lines(text: str, origin: str):
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin} line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{origin} line {lineno}: empty key")
        out.append((key, val))
    return out


def parse_config(text: str = "", overrides=None) -> RunConfig:
    """Parse a config text; ``overrides`` (``key=value`` strings or pairs) win over the file.

    Unknown keys, wrong types and a missing ``model`` raise :class:`ConfigError`.
    """
    pairs = [(k, v, "file") for k, v in _split_lines(text, "config")]
    for ov in overrides or ():
        if isinstance(ov, str):
            if "=" not in ov:
                raise ConfigError(f"override {ov!r} is not key=value")
            k, v = (p.strip() for p in ov.split("=", 1))
        else:
            k, v = ov
        pairs.append((k, str(v), "flag"))
    raw, prov = {}, {}
    for k, v, src in pairs:
        if k in raw and prov[k] == src == "file":
            raise ConfigError(f"duplicate key {k!r}")
        raw[k], prov[k] = v, src
    if "model" not in raw:
        raise ConfigError("missing required key 'model'")
    try:
        mid = ModelId(raw["model"].strip().lower())
    except ValueError:
        raise ConfigError(f"unknown model {raw['model']!r}; choose from {[m.value for m in ModelId]}") from None
    defaults = PARAM_DEFAULTS[mid]
    unknown = [k for k in raw if k != "model" and k not in RUN_KEYS and k not in defaults]
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    kwargs, params = {}, {}
    for k, v in raw.items():
        if k == "model":
            continue
        try:
            if k in RUN_KEYS:
                kwargs[k] = RUN_KEYS[k][0](v)
            elif isinstance(defaults[k], tuple):
                params[k] = _floats(v)
                if not params[k]:
                    raise ValueError("empty coefficient list")
            else:
                params[k] = float(v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k!r}: {v!r} ({exc})") from None
    if kwargs.get("command", "orbit") not in COMMANDS:
        raise ConfigError(f"unknown command {kwargs['command']!r}; choose from {', '.join(COMMANDS)}")
    if kwargs.get("sweep_command", "irc") not in COMMANDS[:-1]:
        raise ConfigError(f"sweep_command must be one of {', '.join(COMMANDS[:-1])}")
    if "irc_v" in kwargs and (len(kwargs["irc_v"]) != 2 or not any(kwargs["irc_v"])):
        raise ConfigError("irc_v must be a nonzero 2-vector")
    if "n" in kwargs and kwargs["n"] < 8:
        raise ConfigError("n must be >= 8")
    try:
        model = make_model(mid, **params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    full = {k: (tuple(v) if isinstance(v, tuple) else float(v)) for k, v in model.params.items()}
    provenance = {k: prov.get(k, "default") for k in ["model", *RUN_KEYS, *full]}
    return RunConfig(mid.value, full, **kwargs, provenance=provenance)


# --------------------------------------------------------------------------
# files


def read_control_csv(path, dim: int | None = None) -> ControlSignal:
    """Load a control signal.

    Header ``t,u1[,u2,...]`` gives a piecewise-constant input; a first line
    ``#impulses`` followed by header ``t,dx1[,...]`` gives an impulse list.
    An empty body is the zero signal.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    impulses = bool(lines) and lines[0].lower().startswith("#impulses")
    if impulses:
        lines = lines[1:]
    lines = [ln for ln in lines if not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"{path}: missing header")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t" or len(header) < 2:
        raise ConfigError(f"{path}: header must be 't,u1[,u2,...]'")
    ncol = len(header)
    if dim is not None and ncol - 1 != dim:
        raise ConfigError(f"{path}: {ncol - 1} input columns but model dimension is {dim}")
    rows = []
    for i, ln in enumerate(lines[1:], 2):
        parts = ln.split(",")
        if len(parts) != ncol:
            raise ConfigError(f"{path} row {i}: expected {ncol} columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ConfigError(f"{path} row {i}: non-numeric entry") from None
    data = np.array(rows, dtype=float).reshape(-1, ncol)
    if data.shape[0] > 1 and not np.all(np.diff(data[:, 0]) > 0):
        raise ConfigError(f"{path}: times must be strictly increasing")
    kind = "impulses" if impulses else "piecewise"
    return ControlSignal(kind, data[:, 0], data[:, 1:])


def write_curve_csv(path, theta, values) -> None:
    """CurveCSV: ``N+1`` rows, the last at ``theta = 2 pi`` repeating the first values."""
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    th = np.append(np.asarray(theta, dtype=float), 2 * math.pi)
    vals = np.vstack([values, values[:1]])
    with open(path, "w") as fh:
        fh.write(",".join(["theta", *(f"c{i + 1}" for i in range(n))]) + "\n")
        for t, row in zip(th, vals):
            fh.write(",".join(f"{x:.17g}" for x in (t, *row)) + "\n")


def read_curve_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def write_manifest(path, entries) -> None:
    with open(path, "w") as fh:
        for k, v in entries:
            fh.write(f"{k}={_fmt(v) if not isinstance(v, str) else v}\n")


def read_manifest(path) -> dict:
    out = {}
    for ln in Path(path).read_text().splitlines():
        if "=" in ln:
            k, v = ln.split("=", 1)
            out[k] = v
    return out


def write_svg(path, theta, values, title: str, labels=None, width: int = 640, height: int = 400) -> None:
    """Minimal line plot of curve components against theta."""
    values = np.asarray(values, dtype=float)
    labels = labels or [f"c{i + 1}" for i in range(values.shape[1])]
    ml, mr, mt, mb = 60, 110, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = float(np.min(theta)), float(np.max(theta))
    lo, hi = float(np.nanmin(values)), float(np.nanmax(values))
    if hi == lo:
        lo, hi = lo - 1, hi + 1
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def px(t):
        return ml + (t - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (hi - v) / (hi - lo) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">theta (rad)</text>',
           f'<text x="{ml + pw / 2}" y="18" text-anchor="middle">{title}</text>']
    for v in (lo + pad, hi - pad):
        out.append(f'<text x="{ml - 4}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for t in (x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{mt + ph + 15}" text-anchor="middle">{t:.3g}</text>')
    if lo < 0 < hi:
        out.append(f'<line x1="{ml}" x2="{ml + pw}" y1="{py(0):.1f}" y2="{py(0):.1f}" stroke="#999" stroke-dasharray="3,3"/>')
    for i in range(values.shape[1]):
        pts = " ".join(f"{px(t):.2f},{py(v):.2f}" for t, v in zip(theta, values[:, i]) if np.isfinite(v))
        c = colors[i % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{ml + pw + 8}" y="{mt + 15 + 16 * i}" fill="{c}">{labels[i]}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _emit_curve(outdir: Path, name: str, theta, values, title: str, labels=None):
    write_curve_csv(outdir / f"{name}.csv", theta, values)
    th = np.append(theta, 2 * math.pi)
    write_svg(outdir / f"{name}.svg", th, np.vstack([values, values[:1]]), title, labels)


# --------------------------------------------------------------------------
# pipelines


def _base_entries(cfg: RunConfig, icfg):
    out = [("model", cfg.model), ("command", cfg.command)]
    out += [(f"param.{k}", v) for k, v in cfg.params.items()]
    out += [("rtol", icfg.rtol), ("atol", icfg.atol), ("extended", icfg.extended)]
    return out


def _orbit_entries(orbit, anchor):
    return [("T", orbit.period), ("omega", orbit.omega), ("closure", orbit.closure),
            ("anchor", anchor), ("anchor.x1", float(orbit.anchor[0])), ("anchor.x2", float(orbit.anchor[1]))]


def _reduction_entries(red: V.Reduction):
    fl = red.floquet
    out = [("k", fl.k), ("k_divergence", fl.extras.get("k_divergence", fl.k)),
           ("k_normal_stretching", red.k_normal), ("lambda", fl.lam), ("lambda_method", fl.method),
           ("lambda_underflow", fl.underflow), ("section", fl.extras.get("section", ""))]
    out += [(f"v{i + 1}", float(c)) for i, c in enumerate(fl.v)]
    out += [("N", red.prc.theta.size), ("prc_method", red.prc.extras.get("method", "")),
            ("prc_periods", red.prc.extras.get("periods", 0)), ("prc_closure", red.prc.closure),
            ("irc_method", red.irc.extras.get("method", "")), ("irc_normalization", red.irc.normalization["type"]),
            ("irc_defect", red.irc.extras.get("defect", float("nan"))), ("irc_closure", red.irc.closure)]
    if "factor" in red.irc.normalization:
        out.append(("irc_maxabs_factor", red.irc.normalization["factor"]))
    if "fallback" in red.irc.normalization:
        out.append(("irc_normalization_fallback", red.irc.normalization["fallback"]))
    return out


def _checks_to_entries(checks):
    out = []
    for name, value, thr, ok in checks:
        out += [(f"check.{name}", value), (f"check.{name}.threshold", thr), (f"check.{name}.pass", ok)]
    return out


def _validate_model(cfg: RunConfig, m, icfg, n):
    """Thresholded checks for one model; returns ``(entries, checks, curves)``."""
    checks, entries, curves = [], [], []
    if m.id in V.FULL_PHASE_MODELS:
        red = V.compute_reduction(m, n, cfg=icfg)
        rep = V.catalog_crossvalidation(m.id, red=red)
        inv = V.invariant_suite(red)
        entries += _orbit_entries(red.orbit, red.anchor) + _reduction_entries(red)
        entries += [("align.shift", rep.shift), ("align.irc_sign", rep.irc_sign)]
        checks += [("prc_sup_rel_err", rep.prc_err, 1e-3, rep.prc_err < 1e-3),
                   ("irc_sup_rel_err", rep.irc_err, 1e-3, rep.irc_err < 1e-3),
                   ("k_rel_err", rep.k_err, 1e-6, rep.k_err < 1e-6),
                   ("zf_rel_err", inv.zf_err, 1e-6, inv.zf_err < 1e-6),
                   ("if_residual", inv.if_err, 1e-6, inv.if_err < 1e-6),
                   ("lambda_consistency", inv.lam_err, 1e-2, inv.lam_err < 1e-2),
                   ("prc_closure", inv.prc_closure, 1e-6, inv.prc_closure < 1e-6),
                   ("irc_closure", inv.irc_closure, 1e-6, inv.irc_closure < 1e-6)]
        curves = [("prc", red.prc), ("irc", red.irc)]
    elif m.id is ModelId.SANDSTEDE:
        red = V.compute_reduction(m, n, cfg=icfg, delta=cfg.delta)
        box = V.homoclinic_box_analysis(red.field, red.orbit, red.irc, cfg.delta)
        entries += _orbit_entries(red.orbit, red.anchor) + _reduction_entries(red)
        entries += [("box.delta", box.delta), ("box.strip_fraction", box.strip_fraction),
                    ("box.time", box.box_time), ("box.lambda_u", box.lambda_u), ("box.lambda_s", box.lambda_s),
                    ("box.rate_y", box.rate_y), ("box.rate_x", box.rate_x),
                    ("box.sign_changes_x", box.sign_changes_x), ("box.n_fit", box.n_fit)]
        for c in ("x", "y"):
            entries += [(f"box.window_rate_{c}.{i}", r) for i, r in enumerate(box.window_rates[c])]
        checks += [("box_fraction", box.fraction, "0.865+-0.01", abs(box.fraction - 0.865) <= 0.01),
                   ("irc_y_rate_rel_err", box.err_y, 0.05, box.err_y < 0.05),
                   ("irc_x_rate_rel_err", box.err_x, 0.10, box.err_x < 0.10),
                   ("irc_return_mismatch", box.return_mismatch, 0.05, box.return_mismatch < 0.05)]
        curves = [("prc", red.prc), ("irc", red.irc)]
    else:
        mus = cfg.sweep_values if cfg.sweep_param == "mu" and cfg.sweep_values else (0.1, 0.01, 0.001)
        rep = V.relaxation_spike_analysis(mus, n_grid=n or 4000)
        entries.append(("spike.window", rep.window))
        for j, r in enumerate(rep.records):
            entries += [(f"run.{j}.mu", r.mu), (f"run.{j}.T", r.period), (f"run.{j}.k", r.k), (f"run.{j}.a", r.a),
                        (f"run.{j}.mass_fraction", r.mass_fraction)]
            entries += [(f"run.{j}.spike{i + 1}", float(p)) for i, p in enumerate(r.spike_phases)]
            entries += [(f"run.{j}.crossing{i + 1}", float(p)) for i, p in enumerate(r.crossings)]
        last = rep.records[-1]
        sep = float(np.diff(last.spike_phases)[0])
        _, resid = V.best_common_shift(last.spike_phases, V.SPIKE_TARGETS)
        checks += [("mass_fraction_monotone", rep.monotone(), True, rep.monotone()),
                   ("mass_fraction_smallest_mu", last.mass_fraction, 0.9, last.mass_fraction > 0.9),
                   ("spike_separation_minus_pi", abs(sep - math.pi), 0.02, abs(sep - math.pi) < 0.02),
                   ("spike_phase_residual", resid, 0.02, resid < 0.02)]
    return entries, checks, curves


def _run_one(cfg: RunConfig, outdir: Path) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    m = cfg.make_model()
    icfg = cfg.integrator()
    entries = _base_entries(cfg, icfg)
    entries += [(f"provenance.{k}", v) for k, v in cfg.provenance.items()]
    status = EXIT_OK
    n = cfg.n
    cmd = cfg.command
    if cmd == "orbit":
        f = model_field(m)
        orbit = find_periodic_orbit(f, default_guess(m), icfg)
        orbit, anchor = V.anchor_orbit(m, orbit, cfg.delta)
        N = n or 1000
        th = 2 * math.pi * np.arange(N) / N
        X = orbit.state_at_time(th / orbit.omega)
        X[0] = orbit.anchor
        _emit_curve(outdir, "orbit", th, X, f"{cfg.model} orbit", ["x", "y"])
        entries += _orbit_entries(orbit, anchor) + [("N", N)]
    elif cmd == "floquet":
        f = model_field(m)
        orbit = find_periodic_orbit(f, default_guess(m), icfg)
        orbit, anchor = V.anchor_orbit(m, orbit, cfg.delta)
        k = floquet_divergence(f, orbit)
        Z = compute_prc(f, orbit, n or (4000 if m.id is ModelId.SANDSTEDE else 1000))
        fl = monodromy_poincare(f, orbit, Z.values[0], k_divergence=k)
        entries += _orbit_entries(orbit, anchor)
        entries += [("k", fl.k), ("k_divergence", k), ("lambda", fl.lam), ("lambda_method", fl.method),
                    ("lambda_underflow", fl.underflow), ("section", fl.extras.get("section", ""))]
        entries += [(f"v{i + 1}", float(c)) for i, c in enumerate(fl.v)]
    elif cmd in ("prc", "irc", "reduce-sim"):
        red = V.compute_reduction(m, n, cfg=icfg, delta=cfg.delta, irc_v=cfg.irc_v)
        entries += _orbit_entries(red.orbit, red.anchor) + _reduction_entries(red)
        th = red.prc.theta
        X = red.orbit.state_at_time(th / red.orbit.omega)
        X[0] = red.orbit.anchor
        _emit_curve(outdir, "orbit", th, X, f"{cfg.model} orbit", ["x", "y"])
        _emit_curve(outdir, "prc", th, red.prc.values, f"{cfg.model} PRC", ["Z_x", "Z_y"])
        if cmd != "prc":
            _emit_curve(outdir, "irc", th, red.irc.values, f"{cfg.model} IRC", ["I_x", "I_y"])
        if cmd == "reduce-sim":
            entries += _reduce_sim(cfg, red, outdir, m)
    elif cmd == "validate":
        ve, checks, curves = _validate_model(cfg, m, icfg, n)
        entries += ve + _checks_to_entries(checks)
        for name, c in curves:
            _emit_curve(outdir, name, c.theta, c.values, f"{cfg.model} {c.kind}", [f"{c.kind}_x", f"{c.kind}_y"])
        failed = [name for name, _, _, ok in checks if not ok]
        entries.append(("validate.failed", ",".join(failed) if failed else "none"))
        if failed:
            print(f"error code={EXIT_VALIDATION} kind=validation model={cfg.model} failed={','.join(failed)}",
                  file=sys.stderr)
            status = EXIT_VALIDATION
    entries.append(("status", status))
    write_manifest(outdir / "manifest.txt", entries)
    (outdir / "config.txt").write_text(cfg.to_text())
    return status


def _reduce_sim(cfg: RunConfig, red: V.Reduction, outdir: Path, m):
    u = read_control_csv(cfg.control, red.field.dim) if cfg.control else ControlSignal.zero(red.field.dim)
    T = red.orbit.period
    t_end = cfg.t_end if cfg.t_end is not None else max(T, float(u.times[-1]) + T if u.times.size else T)
    init = ReducedState(cfg.theta0, cfg.psi0)
    t_eval = np.unique(np.concatenate([np.linspace(0.0, t_end, 501), u.times[(u.times >= 0) & (u.times <= t_end)]]))
    k = red.floquet.k
    run = simulate_reduced(red.prc, red.irc, k, red.orbit.omega, u, init, (0.0, t_end), t_eval=t_eval)
    with open(outdir / "reduced.csv", "w") as fh:
        fh.write("t,theta,psi\n")
        for row in zip(run.t, run.theta, run.psi):
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    write_svg(outdir / "reduced.svg", run.t, np.c_[run.theta, run.psi], f"{cfg.model} reduced model", ["theta", "psi"])
    out = [("control", cfg.control or "none"), ("control_kind", u.kind), ("t_end", t_end),
           ("theta0", cfg.theta0), ("psi0", cfg.psi0), ("jumps", len(run.jumps)),
           ("final.theta", float(run.theta[-1])), ("final.psi", float(run.psi[-1]))]
    for i, (t, dth, dps) in enumerate(run.jumps):
        out += [(f"jump{i}.t", t), (f"jump{i}.dtheta", dth), (f"jump{i}.dpsi", dps)]
    return out


def _sweep_worker(args):
    cfg, outdir = args
    try:
        return _run_one(cfg, outdir)
    except SOLVER_ERRORS as exc:
        _error(EXIT_SOLVER, "solver", exc)
        return EXIT_SOLVER


def _run_sweep(cfg: RunConfig, outdir: Path) -> int:
    if not cfg.sweep_param or not cfg.sweep_values:
        raise ConfigError("sweep needs sweep_param and sweep_values")
    if cfg.sweep_param not in cfg.params:
        raise ConfigError(f"sweep_param {cfg.sweep_param!r} is not a parameter of {cfg.model}")
    jobs = []
    for val in cfg.sweep_values:
        params = dict(cfg.params)
        params[cfg.sweep_param] = float(val)
        try:
            make_model(cfg.model, **params)
        except ValueError as exc:
            raise ConfigError(f"sweep value {val:g}: {exc}") from None
        sub = RunConfig(cfg.model, params, **{k: getattr(cfg, k) for k in RUN_KEYS if k != "command"},
                        provenance=dict(cfg.provenance))
        sub.command = cfg.sweep_command
        jobs.append((sub, outdir / f"{cfg.sweep_param}={val:g}"))
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            codes = list(ex.map(_sweep_worker, jobs))
    else:
        codes = [_sweep_worker(j) for j in jobs]
    entries = [("model", cfg.model), ("command", "sweep"), ("sweep_param", cfg.sweep_param),
               ("sweep_command", cfg.sweep_command)]
    for i, ((_, p), c) in enumerate(zip(jobs, codes)):
        entries += [(f"run.{i}.dir", p.name), (f"run.{i}.status", c)]
    status = max(codes) if codes else EXIT_OK
    entries.append(("status", status))
    write_manifest(outdir / "manifest.txt", entries)
    (outdir / "config.txt").write_text(cfg.to_text())
    return status


def _error(code: int, kind: str, exc) -> None:
    msg = str(exc).replace("\n", " ")
    print(f"error code={code} kind={kind} type={type(exc).__name__} message={msg}", file=sys.stderr)


def run(config: RunConfig) -> int:
    """Execute the configured command; returns the exit status."""
    out = Path(config.output)
    try:
        if config.command == "sweep":
            return _run_sweep(config, out)
        return _run_one(config, out)
    except ConfigError as exc:
        _error(EXIT_CONFIG, "config", exc)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        _error(EXIT_SOLVER, "solver", exc)
        return EXIT_SOLVER
    except V.ValidationError as exc:
        _error(EXIT_VALIDATION, "validation", exc)
        return EXIT_VALIDATION


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="augphase", description="Phase and isostable reduction of planar oscillators.")
    ap.add_argument("config", nargs="?", help="config file of 'key = value' lines")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the config's command")
    ap.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config value (repeatable)")
    ap.add_argument("-m", "--model")
    ap.add_argument("-o", "--output")
    args = ap.parse_args(argv)
    text = ""
    if args.config:
        if args.config in COMMANDS and args.command is None and not os.path.exists(args.config):
            args.command, args.config = args.config, None
        else:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                _error(EXIT_CONFIG, "config", exc)
                return EXIT_CONFIG
    overrides = list(args.set)
    for key in ("model", "output", "command"):
        if getattr(args, key):
            overrides.append(f"{key}={getattr(args, key)}")
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        _error(EXIT_CONFIG, "config", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
