"""Validation studies: catalog cross-checks, the saddle-box analysis of the
near-homoclinic model, the van der Pol relaxation sweep and the universal
invariants every computed reduction must satisfy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .adjoint import ResponseCurve, compute_irc, compute_prc
from .floquet import (FloquetData, floquet_divergence, floquet_normal_stretching,
                      monodromy_poincare, relaxation_exponent_decomposition)
from .models import (Model, ModelId, analytic_reduction, default_guess, integrator_defaults,
                     make_model, model_field, relaxation_limit_orbit)
from .odecore import IntegratorConfig, VectorField, find_events
from .orbit import PeriodicOrbit, find_periodic_orbit, sample_orbit, set_phase_anchor

__all__ = [
    "ValidationError",
    "Reduction",
    "compute_reduction",
    "anchor_orbit",
    "anchor_at_box_entry",
    "BoxFitReport",
    "homoclinic_box_analysis",
    "box_time_fraction",
    "SpikeRecord",
    "SpikeReport",
    "relaxation_spike_analysis",
    "best_common_shift",
    "CatalogReport",
    "catalog_crossvalidation",
    "align_curves",
    "InvariantReport",
    "invariant_suite",
    "FULL_PHASE_MODELS",
    "DEFAULT_BOX_DELTA",
    "SPIKE_TARGETS",
]

TWO_PI = 2 * math.pi
FULL_PHASE_MODELS = (ModelId.LAMBDA_OMEGA, ModelId.HOPF, ModelId.BAUTIN, ModelId.SNIPER)
DEFAULT_BOX_DELTA = 0.0201
# reference spike phases of the singular van der Pol cycle (phase origin unspecified)
SPIKE_TARGETS = (1.6567, 4.7983)


class ValidationError(RuntimeError):
    pass


def _wrap(d):
    """Wrap phase differences to ``(-pi, pi]``."""
    return -np.mod(-np.asarray(d, dtype=float) + math.pi, TWO_PI) + math.pi


# --------------------------------------------------------------------------
# end-to-end pipeline


@dataclass
class Reduction:
    """Everything computed for one model: orbit, Floquet data, PRC and IRC."""

    model: Model
    field: VectorField
    orbit: PeriodicOrbit
    floquet: FloquetData
    prc: ResponseCurve
    irc: ResponseCurve
    k_normal: float = float("nan")
    anchor: str = ""


def anchor_at_box_entry(orbit: PeriodicOrbit, delta: float) -> PeriodicOrbit:
    """Put ``theta = 0`` where the orbit enters ``[0, delta]^2`` across ``y = delta``.

    Among downward crossings of ``y = delta`` the one with ``0 <= x <= delta``
    closest to the stable axis is used.
    """
    traj = orbit.traj
    hits = find_events(traj, lambda z: float(z[1]) - delta, -1)
    best = None
    for tc, xc in hits:
        x = float(xc[0])
        if 0 <= x <= delta and (best is None or x < best[1]):
            best = (tc, x)
    if best is None:
        raise ValidationError(f"orbit never enters the box [0, {delta:g}]^2 (delta too small?)")
    tc = best[0]
    anchor = np.asarray(traj(traj.t.dtype.type(tc)), dtype=float)
    return PeriodicOrbit(orbit.field, anchor, orbit.period, traj, float(tc) % float(traj.t[-1]),
                         orbit.closure, orbit.cfg)


def _anchor_positive_x(orbit: PeriodicOrbit) -> PeriodicOrbit:
    for d in (1, -1):
        try:
            o = set_phase_anchor(orbit, lambda z: z[1], d)
        except LookupError:
            continue
        if o.anchor[0] > 0:
            return o
    raise ValidationError("orbit does not cross the positive x axis")


def anchor_orbit(model: Model, orbit: PeriodicOrbit, delta: float = DEFAULT_BOX_DELTA):
    """Apply the per-model phase origin; returns ``(orbit, description)``.

    Polar normal forms use the positive-x crossing, the near-homoclinic
    model the box entry and van der Pol the maximum-x point.
    """
    if model.id is ModelId.SANDSTEDE:
        return anchor_at_box_entry(orbit, delta), f"box entry y={delta:g}"
    if model.id is ModelId.VAN_DER_POL:
        f = orbit.field
        return set_phase_anchor(orbit, lambda z: f(z)[0], -1), "maximum x"
    return _anchor_positive_x(orbit), "positive x axis"


def compute_reduction(model, n_grid: int | None = None, *, cfg: IntegratorConfig | None = None,
                      delta: float = DEFAULT_BOX_DELTA, irc_v=None) -> Reduction:
    """Orbit, Floquet exponent (divergence and return map), PRC and IRC of a model.

    ``n_grid`` defaults to 1000 (4000 for the near-homoclinic model).  The IRC
    is normalized with ``I(0) . v = 1`` using the Floquet eigenvector unless
    ``irc_v`` gives another unit vector (e.g. the opposite orientation).
    """
    m = model if isinstance(model, Model) else make_model(model)
    f = model_field(m)
    cfg = cfg or integrator_defaults(m)
    if n_grid is None:
        n_grid = 4000 if m.id is ModelId.SANDSTEDE else 1000
    orbit = find_periodic_orbit(f, default_guess(m), cfg)
    orbit, anchor = anchor_orbit(m, orbit, delta)
    k = floquet_divergence(f, orbit)
    Z = compute_prc(f, orbit, n_grid)
    floq = monodromy_poincare(f, orbit, Z.values[0], k_divergence=k)
    v = floq.v if irc_v is None else np.asarray(irc_v, dtype=float) / np.linalg.norm(irc_v)
    I = compute_irc(f, orbit, k, v, n_grid)
    k_n = floquet_normal_stretching(f, orbit) if f.dim == 2 else float("nan")
    return Reduction(m, f, orbit, floq, Z, I, k_n, anchor)


# --------------------------------------------------------------------------
# near-homoclinic saddle box


@dataclass
class BoxFitReport:
    """Saddle-box statistics and in-box exponential fits of the IRC.

    Rates are in 1/time (fitted slope in 1/rad times ``omega``).
    ``fraction`` counts time with both coordinates in ``[0, delta]``;
    ``strip_fraction`` only requires ``|y| <= delta`` and is a diagnostic.
    ``window_rates`` holds per-component rates over the thirds of the box
    run, which show whether a single exponential describes the data.
    """

    delta: float
    fraction: float
    strip_fraction: float
    box_time: float
    rate_y: float
    rate_x: float
    lambda_u: float
    lambda_s: float
    err_y: float
    err_x: float
    n_fit: int
    sign_changes_x: int
    window_rates: dict = field(default_factory=dict)
    return_mismatch: float = float("nan")


def box_time_fraction(orbit: PeriodicOrbit, delta: float = DEFAULT_BOX_DELTA,
                      n_time: int = 200_000) -> tuple[float, float]:
    """Fraction of the period spent in ``[0, delta]^2``, and in the strip ``|y| <= delta``.

    Sampled on ``n_time`` equispaced times; independent of the anchor.
    """
    ts = orbit.period * np.arange(n_time) / n_time
    X = orbit.state_at_time(ts)
    fraction = float(np.all((X >= 0) & (X <= delta), axis=1).mean())
    if fraction == 0:
        raise ValidationError("box never entered")
    return fraction, float(np.mean(np.abs(X[:, 1]) <= delta))


def homoclinic_box_analysis(field: VectorField, orbit: PeriodicOrbit, irc: ResponseCurve,
                            delta: float = DEFAULT_BOX_DELTA, *, trim: float = 0.02,
                            n_time: int = 200_000) -> BoxFitReport:
    """Time in the box ``[0, delta]^2`` and exponential rates of the IRC inside it.

    The orbit must be anchored at the box entry (see :func:`anchor_at_box_entry`).
    ``log|I_y|`` and ``log|I_x|`` are fitted against phase by least squares
    over the in-box run, dropping ``trim`` of it at each end.
    """
    x0 = orbit.anchor
    if not (abs(x0[1] - delta) <= 1e-6 * delta and 0 <= x0[0] <= delta):
        raise ValueError("orbit is not anchored at the box entry; use anchor_at_box_entry")
    J0 = np.asarray(field.jac(np.zeros(2)), dtype=float)
    ev = np.sort(np.linalg.eigvals(J0).real)
    lam_s, lam_u = float(ev[0]), float(ev[1])

    fraction, strip = box_time_fraction(orbit, delta, n_time)

    th = irc.theta
    Xg = orbit.state_at_time(th / orbit.omega)
    ing = np.all((Xg >= 0) & (Xg <= delta), axis=1)
    ing[0] = True
    run = int(np.argmin(ing)) if not ing.all() else ing.size
    cut = int(trim * run)
    sel = np.arange(cut, run - cut)
    if sel.size < 8:
        raise ValidationError("too few in-box samples for a fit; refine the grid")
    w = orbit.omega

    def rate(c, idx):
        y = np.abs(irc.values[idx, c])
        ok = y > 0
        return float(np.polyfit(th[idx][ok], np.log(y[ok]), 1)[0]) * w

    ry, rx = rate(1, sel), rate(0, sel)
    thirds = np.array_split(sel, 3)
    windows = {"x": [rate(0, s) for s in thirds], "y": [rate(1, s) for s in thirds]}
    sx = int(np.sum(np.diff(np.sign(irc.values[:run, 0])) != 0))
    mismatch = float(np.max(np.abs(irc.values[-1] - irc.values[0]))) / irc.scale
    return BoxFitReport(delta, fraction, strip, run * orbit.period / th.size, ry, rx, lam_u, lam_s,
                        abs(ry - lam_u) / abs(lam_u), abs(rx - lam_s) / abs(lam_s), int(sel.size), sx,
                        windows, mismatch)


# --------------------------------------------------------------------------
# relaxation sweep


@dataclass
class SpikeRecord:
    """One van der Pol run.

    ``crossings`` are all zeros of ``f_x - a`` on the orbit (phase from the
    maximum-x point); ``spike_phases`` is the pair on the slow branches,
    where the IRC concentrates.
    """

    mu: float
    period: float
    k: float
    a: float
    crossings: np.ndarray
    spike_phases: np.ndarray
    mass_fraction: float
    irc: ResponseCurve | None = None
    prc: ResponseCurve | None = None
    orbit: PeriodicOrbit | None = None


@dataclass
class SpikeReport:
    window: float
    records: list
    limit_phases: tuple
    limit_period: float

    @property
    def mus(self):
        return [r.mu for r in self.records]

    @property
    def mass_fractions(self):
        return [r.mass_fraction for r in self.records]

    def monotone(self) -> bool:
        m = self.mass_fractions
        return all(b > a for a, b in zip(m, m[1:]))


def _crossings(fn, orbit: PeriodicOrbit, n: int = 4096):
    """All sign changes of ``fn`` along the orbit, refined by bisection in time."""
    ts = orbit.period * np.arange(n + 1) / n
    X = orbit.state_at_time(ts)
    g = np.array([fn(x) for x in X])
    out = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        t = brentq(lambda s: fn(orbit.state_at_time(s)), ts[i], ts[i + 1], xtol=1e-14 * orbit.period)
        out.append(t * orbit.omega)
    return np.array(out)


def best_common_shift(phases, targets):
    """Common shift ``s`` minimizing ``max |phases + s - targets|`` (mod 2 pi).

    Returns ``(s, residual)``.
    """
    d = _wrap(np.asarray(targets, dtype=float) - np.asarray(phases, dtype=float))
    s = 0.5 * (d.max() + d.min())
    return float(s), float(np.max(np.abs(d - s)))


def relaxation_spike_analysis(mus=(0.1, 0.01, 0.001), window: float = 0.3, *, n_grid: int = 4000,
                              keep_curves: bool = False) -> SpikeReport:
    """Spike structure of the van der Pol IRC as the relaxation limit is approached.

    For each ``mu`` (decreasing) the orbit is anchored at its maximum-x
    point, the IRC computed with max-abs normalization, and the fraction of
    ``integral |I_x| + |I_y|`` lying within ``window`` (total width, rad)
    of the slow-branch zeros of ``f_x - a`` is reported.
    """
    mus = [float(m) for m in mus]
    if any(b >= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu values must be decreasing")
    records = []
    for mu in mus:
        m = make_model(ModelId.VAN_DER_POL, mu=mu)
        f = model_field(m)
        try:
            orbit = find_periodic_orbit(f, default_guess(m), integrator_defaults(m))
        except Exception as exc:  # noqa: BLE001
            raise ValidationError(f"van der Pol orbit not found at mu={mu:g}: {exc}") from exc
        orbit = set_phase_anchor(orbit, lambda z: f(z)[0], -1)
        fs = f.fast_slow
        a, _ = relaxation_exponent_decomposition(f, orbit)
        k = floquet_divergence(f, orbit)
        Z = compute_prc(f, orbit, n_grid)
        floq = monodromy_poincare(f, orbit, Z.values[0], k_divergence=k)
        I = compute_irc(f, orbit, k, floq.v, n_grid, normalization="maxabs")
        cr = _crossings(lambda z: fs.f_x(z) - a, orbit)
        if cr.size % 2:
            raise ValidationError(f"odd number of f_x - a crossings ({cr.size}) at mu={mu:g}")
        # slow-branch crossings: smallest speed among the crossings
        speeds = np.array([np.linalg.norm(f(orbit.state_at_time(c / orbit.omega))) for c in cr])
        spikes = np.sort(cr[np.argsort(speeds)[:2]])
        mass = np.abs(I.values).sum(axis=1)
        near = np.zeros(I.theta.size, bool)
        for c in spikes:
            near |= np.abs(_wrap(I.theta - c)) <= 0.5 * window
        records.append(SpikeRecord(mu, orbit.period, k, a, cr, spikes, float(mass[near].sum() / mass.sum()),
                                   *((I, Z, orbit) if keep_curves else (None, None, None))))
    lim = relaxation_limit_orbit()
    return SpikeReport(window, records, lim["theta_spikes"], lim["period"])


# --------------------------------------------------------------------------
# catalog


def align_curves(num: ResponseCurve, ana, *, allow_sign: bool = False):
    """Phase shift ``s`` minimizing ``sup |num(theta + s) - ana(theta)|``.

    Grid search over the ``N`` grid shifts then golden-section refinement.
    Returns ``(s, sign, sup_error / sup|ana|)``.
    """
    th = num.theta
    ref = np.asarray(ana(th), dtype=float)
    scale = float(np.max(np.abs(ref)))
    signs = (1.0, -1.0) if allow_sign else (1.0,)
    best = None
    for sg in signs:
        errs = [np.max(np.abs(sg * np.roll(num.values, -j, axis=0) - ref)) for j in range(th.size)]
        j = int(np.argmin(errs))
        h = TWO_PI / th.size

        def obj(s, sg=sg):
            return float(np.max(np.abs(sg * num(th + s) - ref)))

        s0 = th[j]
        r = minimize_scalar(obj, bracket=(s0 - h, s0, s0 + h), method="golden", tol=1e-10)
        cand = (float(r.fun), float(np.mod(r.x, TWO_PI)), sg)
        if best is None or cand[0] < best[0]:
            best = cand
    return best[1], best[2], best[0] / scale


@dataclass
class CatalogReport:
    model: str
    params: dict
    shift: float
    irc_sign: float
    prc_err: float
    irc_err: float
    irc_err_own_shift: float
    k_num: float
    k_exact: float
    k_err: float
    lam: float
    lam_method: str
    period: float

    def passed(self, curve_tol: float = 1e-3, k_tol: float = 1e-6) -> bool:
        return self.prc_err < curve_tol and self.irc_err < curve_tol and self.k_err < k_tol


def catalog_crossvalidation(model_id, n_grid: int = 1000, *, red: Reduction | None = None,
                            **params) -> CatalogReport:
    """Compare numerical PRC, IRC and ``k`` with the closed forms.

    The PRC fixes the phase shift between the numerical anchor and the
    formula's origin; the IRC is compared at the same shift, up to the sign
    set by the orientation of ``v``.  Raises :class:`ValidationError` when
    the aligned mismatch exceeds 10%, which signals a genuine solver problem
    rather than a convention difference.
    """
    m = red.model if red is not None else make_model(model_id, **params)
    if m.id not in FULL_PHASE_MODELS:
        raise ValueError(f"{m.id.value} has no full-phase closed form")
    red = red or compute_reduction(m, n_grid)
    ana = analytic_reduction(m)
    s, _, prc_err = align_curves(red.prc, ana.prc)
    shifted = ResponseCurve("IRC", red.irc.theta, red.irc(red.irc.theta + s), red.irc.normalization)
    ref = ana.irc(red.irc.theta)
    scale = float(np.max(np.abs(ref)))
    e_pos = float(np.max(np.abs(shifted.values - ref))) / scale
    e_neg = float(np.max(np.abs(-shifted.values - ref))) / scale
    sign = 1.0 if e_pos <= e_neg else -1.0
    irc_err = min(e_pos, e_neg)
    _, _, own = align_curves(red.irc, ana.irc, allow_sign=True)
    if max(prc_err, irc_err) > 0.1:
        raise ValidationError(f"{m.id.value}: aligned mismatch PRC {prc_err:.2e}, IRC {irc_err:.2e} exceeds 10%")
    k = red.floquet.extras.get("k_divergence", red.floquet.k)
    return CatalogReport(m.id.value, dict(m.params), s, sign, prc_err, irc_err, own, k, ana.k,
                         abs(k - ana.k) / abs(ana.k), red.floquet.lam, red.floquet.method,
                         red.orbit.period)


# --------------------------------------------------------------------------
# invariants


@dataclass
class InvariantReport:
    """Pointwise and global consistency checks of a reduction.

    ``zf_err``: max ``|Z.F/omega - 1|``; ``zf_bad_fraction``: share of grid
    points above the tolerance.  ``if_err``: max ``|I.F| / (|I||F|)``.
    ``lam_err``: relative mismatch of ``exp(kT)`` between two independent
    routes (``lam_routes`` names them).  Closures are relative to curve scale.
    """

    model: str
    zf_err: float
    zf_bad_fraction: float
    if_err: float
    lam_err: float
    lam_routes: str
    prc_closure: float
    irc_closure: float
    irc_method: str
    extras: dict = field(default_factory=dict)


def invariant_suite(red: Reduction, *, zf_tol: float = 1e-6, irc_check: ResponseCurve | None = None) -> InvariantReport:
    """Evaluate the universal invariants on a computed reduction.

    ``irc_check`` optionally supplies an IRC computed by another method
    (e.g. Cartesian components) for the ``I . F = 0`` test; by default the
    reduction's own IRC is used.
    """
    f, o = red.field, red.orbit
    Z = red.prc
    _, X = sample_orbit(o, Z.theta.size)
    F = np.asarray(f(X.T), dtype=float).T
    zf = np.abs(np.sum(Z.values * F, axis=1) / o.omega - 1)
    I = irc_check or red.irc
    iF = np.abs(np.sum(I.values * F, axis=1)) / (np.linalg.norm(I.values, axis=1) * np.linalg.norm(F, axis=1))
    floq = red.floquet
    T = o.period
    if floq.method == "monodromy":
        k_div = floq.extras["k_divergence"]
        lam_err = abs(floq.lam - math.exp(k_div * T)) / floq.lam
        routes = "monodromy vs divergence"
    else:
        # the return map is below resolution; compare the two quadrature routes
        k1, k2 = floq.k, red.k_normal
        lam_err = abs(math.expm1((k2 - k1) * T))
        routes = "normal stretching vs divergence"
    return InvariantReport(red.model.id.value, float(zf.max()), float(np.mean(zf > zf_tol)),
                           float(iF.max()), float(lam_err), routes, Z.closure, I.closure,
                           I.extras.get("method", ""),
                           {"zf_median": float(np.median(zf))})
