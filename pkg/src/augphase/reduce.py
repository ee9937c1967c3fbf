"""Augmented phase-reduced model under input, and comparison with the full model.

The reduced state ``(theta, psi)`` obeys

    theta' = omega + Z(theta) . U(t)
    psi'   = k psi + I(theta) . U(t)

with ``Z`` and ``I`` interpolated by periodic cubic splines.  Impulsive inputs
are exact jumps ``theta += Z(theta) . delta``, ``psi += I(theta) . delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import OracleUnavailable, ResponseCurve, isostable_shift_oracle, phase_shift_oracle
from .floquet import FloquetData
from .odecore import IntegrationError, IntegratorConfig, Trajectory, VectorField, integrate, solve
from .orbit import PeriodicOrbit

__all__ = [
    "ReducedState",
    "ControlSignal",
    "ReducedRun",
    "SegmentedTrajectory",
    "ReductionError",
    "ComparisonReport",
    "simulate_reduced",
    "simulate_full_perturbed",
    "compare_reductions",
]

TWO_PI = 2 * math.pi


class ReductionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReducedState:
    theta: float
    psi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.psi)):
            raise ValueError("reduced state must be finite")
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


@dataclass(frozen=True)
class ControlSignal:
    """External input ``U(t)``.

    ``kind='piecewise'``: ``values[i]`` holds on ``[times[i], times[i+1])``,
    the last row holds thereafter and the input is zero before ``times[0]``.
    ``kind='impulses'``: state jumps by ``values[i]`` at ``times[i]``.
    Times must be strictly increasing.
    """

    kind: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("piecewise", "impulses"):
            raise ValueError(f"unknown control kind {self.kind!r}")
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        v = v.reshape(len(t), -1) if v.size else np.zeros((len(t), v.shape[-1] if v.ndim == 2 else 0))
        if v.shape[0] != t.size:
            raise ValueError("times and values differ in length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("control times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("control samples must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, n: int) -> "ControlSignal":
        return cls("piecewise", np.zeros(0), np.zeros((0, n)))

    @classmethod
    def impulses(cls, times, deltas) -> "ControlSignal":
        return cls("impulses", np.asarray(times, dtype=float), np.atleast_2d(np.asarray(deltas, dtype=float)))

    @classmethod
    def piecewise(cls, times, values) -> "ControlSignal":
        return cls("piecewise", np.asarray(times, dtype=float), np.atleast_2d(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def is_zero(self) -> bool:
        return self.times.size == 0 or not np.any(self.values)

    def __call__(self, t) -> np.ndarray:
        """Continuous part of the input at time ``t`` (impulse lists give zero)."""
        if self.kind == "impulses" or self.times.size == 0:
            return np.zeros(self.dim)
        i = int(np.searchsorted(self.times, float(t), side="right")) - 1
        return self.values[i].copy() if i >= 0 else np.zeros(self.dim)

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        t = self.times
        return t[(t > t0) & (t < t1)]

    def check_dim(self, n: int) -> None:
        if self.times.size and self.dim != n:
            raise ValueError(f"control has {self.dim} components, model has {n}")


def _segments(u: ControlSignal, t0: float, t1: float):
    """Cut ``[t0, t1]`` at every control time strictly inside it."""
    pts = [t0, *u.breakpoints(t0, t1), t1]
    return list(zip(pts[:-1], pts[1:]))


def _impulses_at(u: ControlSignal, t: float, first: bool):
    if u.kind != "impulses":
        return None
    hit = np.flatnonzero(u.times == t)
    if hit.size == 0:
        return None
    return u.values[hit[0]]


@dataclass
class ReducedRun:
    """Reduced trajectory: unwrapped phase and isostable at output times.

    At an impulse time the post-jump value is reported.
    """

    t: np.ndarray
    theta_unwrapped: np.ndarray
    psi: np.ndarray
    jumps: list = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        return np.mod(self.theta_unwrapped, TWO_PI)

    def final(self) -> ReducedState:
        return ReducedState(float(self.theta_unwrapped[-1]), float(self.psi[-1]))


def simulate_reduced(Z: ResponseCurve, I: ResponseCurve, k: float, omega: float, u: ControlSignal,
                     init: ReducedState, t_span, *, t_eval=None,
                     cfg: IntegratorConfig | None = None) -> ReducedRun:
    """Integrate the augmented phase-reduced model over ``t_span``.

    Unforced segments are advanced in closed form (``theta + omega t``,
    ``psi e^{k t}``); forced segments use the adaptive integrator.
    """
    if Z.values.shape != I.values.shape or not np.allclose(Z.theta, I.theta):
        raise ValueError("Z and I must share a theta grid")
    u.check_dim(Z.n)
    cfg = cfg or IntegratorConfig(rtol=1e-11, atol=1e-14)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    t_eval = np.linspace(t0, t1, 201) if t_eval is None else np.asarray(t_eval, dtype=float)
    if t_eval.size and (t_eval.min() < t0 or t_eval.max() > t1):
        raise ValueError("t_eval outside t_span")
    th, ps = float(init.theta), float(init.psi)
    out_th = np.full(t_eval.size, np.nan)
    out_ps = np.full(t_eval.size, np.nan)
    jumps = []

    def jump(t, th, ps):
        d = _impulses_at(u, t, True)
        if d is None:
            return th, ps
        dth = float(Z(th) @ d)
        dps = float(I(th) @ d)
        jumps.append((t, dth, dps))
        return th + dth, ps + dps

    th, ps = jump(t0, th, ps)
    for a, b in _segments(u, t0, t1):
        sel = (t_eval >= a) & ((t_eval < b) | ((b == t1) & (t_eval <= b)))
        U = u(a)
        if not np.any(U):
            out_th[sel] = th + omega * (t_eval[sel] - a)
            out_ps[sel] = ps * np.exp(k * (t_eval[sel] - a))
            th, ps = th + omega * (b - a), ps * math.exp(k * (b - a))
        else:
            def rhs(t, y, U=U):
                return np.array([omega + Z(y[0]) @ U, k * y[1] + I(y[0]) @ U])

            try:
                traj = solve(rhs, np.array([th, ps]), (a, b), cfg)
            except IntegrationError as exc:
                raise ReductionError(f"reduced model blew up ({exc}); input too large for the linear isostable model") from exc
            if np.any(sel):
                vals = np.asarray(traj(t_eval[sel]), dtype=float)
                out_th[sel], out_ps[sel] = vals[:, 0], vals[:, 1]
            th, ps = (float(c) for c in traj.x1)
        if not (math.isfinite(th) and math.isfinite(ps)):
            raise ReductionError("reduced state became nonfinite; input too large for the linear isostable model")
        if b < t1:
            th, ps = jump(b, th, ps)
            out_th[t_eval == b] = th
            out_ps[t_eval == b] = ps
    if u.kind == "impulses" and np.any(u.times == t1):
        th, ps = jump(t1, th, ps)
        out_th[t_eval == t1] = th
        out_ps[t_eval == t1] = ps
    if np.any(~np.isfinite(out_ps)):
        raise ReductionError("reduced isostable became nonfinite")
    return ReducedRun(t_eval, out_th, out_ps, jumps)


class SegmentedTrajectory:
    """Concatenation of trajectories separated by state jumps (right-continuous)."""

    def __init__(self, segments: list[Trajectory]):
        if not segments:
            raise ValueError("need at least one segment")
        self.segments = segments
        self._starts = np.array([float(s.t0) for s in segments])

    @property
    def t0(self):
        return self.segments[0].t0

    @property
    def t1(self):
        return self.segments[-1].t1

    @property
    def x0(self):
        return self.segments[0].x0

    @property
    def x1(self):
        return self.segments[-1].x1

    def __call__(self, t):
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self._starts, tq, side="right") - 1, 0, len(self.segments) - 1)
        n = np.asarray(self.segments[0].x0).size
        out = np.empty((tq.size, n), dtype=np.asarray(self.segments[0].x0).dtype)
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = self.segments[j](tq[sel].astype(self.segments[j].t.dtype))
        return out[0] if np.ndim(t) == 0 else out


def simulate_full_perturbed(field: VectorField, u: ControlSignal, x0, t_span,
                            cfg: IntegratorConfig | None = None):
    """Integrate ``x' = F(x) + U(t)`` with impulses applied as exact jumps ``x -> x + delta``.

    Without input the result is exactly :func:`integrate`'s trajectory.
    """
    cfg = cfg or IntegratorConfig()
    u.check_dim(field.dim)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if u.is_zero:
        return integrate(field, x0, (t0, t1), cfg)
    dt = cfg.dtype
    x = np.asarray(x0, dtype=dt).reshape(-1)
    segs = []

    def jump(t, x):
        d = _impulses_at(u, t, True)
        return x if d is None else x + np.asarray(d, dtype=dt)

    x = jump(t0, x)
    for a, b in _segments(u, t0, t1):
        U = np.asarray(u(a), dtype=dt)
        if np.any(U):
            traj = solve(lambda t, y, U=U: np.asarray(field.rhs(y), dtype=dt) + U, x, (a, b), cfg)
        else:
            traj = integrate(field, x, (a, b), cfg)
        segs.append(traj)
        x = traj.x1
        if b < t1:
            x = jump(b, x)
    if u.kind == "impulses" and np.any(u.times == t1):
        x = jump(t1, x)
        segs.append(Trajectory(np.array([t1, t1], dtype=dt)[:1], x[None, :], None, "jump"))
    return SegmentedTrajectory(segs)


@dataclass
class ComparisonReport:
    """Reduced-vs-measured impulse responses over a magnitude sweep.

    ``phase_err[i, j]`` and ``psi_err[i, j]`` are absolute errors at phase
    ``thetas[i]`` and magnitude ``magnitudes[j]``; ``psi_err`` is NaN where
    the isostable oracle is unavailable.  ``phase_exponent`` is the slope of
    log(max phase error) against log(magnitude).
    """

    thetas: np.ndarray
    magnitudes: np.ndarray
    direction: np.ndarray
    phase_err: np.ndarray
    psi_err: np.ndarray
    phase_exponent: float
    psi_exponent: float
    irc_rescale: float
    notes: list = field(default_factory=list)

    @property
    def max_phase_err(self):
        return np.max(self.phase_err, axis=0)

    @property
    def max_psi_err(self):
        return np.nanmax(self.psi_err, axis=0) if np.any(np.isfinite(self.psi_err)) else np.full(self.magnitudes.size, np.nan)


def _slope(mags, errs):
    ok = np.isfinite(errs) & (errs > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(mags[ok]), np.log(errs[ok]), 1)[0])


def compare_reductions(field: VectorField, orbit: PeriodicOrbit, Z: ResponseCurve, I: ResponseCurve,
                       floq: FloquetData, *, thetas=(0.0,), direction=None,
                       magnitudes=(1e-4, 1e-3, 1e-2, 1e-1), horizon: float | None = None,
                       cfg: IntegratorConfig | None = None) -> ComparisonReport:
    """Impulse responses of the reduced model against brute-force measurements.

    For each phase and magnitude the impulse ``m * direction`` (default the
    unit diagonal) is applied; the reduced jump ``Z . delta``, ``I . delta``
    is compared with the asymptotic phase shift and the isostable value
    measured on the full model.  The IRC is first rescaled to the oracle's
    normalization ``I(0) . v = 1`` with ``v`` from ``floq``.
    """
    n = field.dim
    d = np.ones(n) / math.sqrt(n) if direction is None else np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    mags = np.asarray(magnitudes, dtype=float)
    ths = np.asarray(thetas, dtype=float)
    i0v = float(I(0.0) @ floq.v)
    rescale = 1.0 / i0v if abs(i0v) > 1e-12 * max(1.0, I.scale) else float("nan")
    perr = np.zeros((ths.size, mags.size))
    serr = np.full((ths.size, mags.size), np.nan)
    notes = []
    for i, th in enumerate(ths):
        for j, m in enumerate(mags):
            delta = m * d
            init = ReducedState(th, 0.0)
            run = simulate_reduced(Z, I, floq.k, orbit.omega, ControlSignal.impulses([0.0], [delta]),
                                   init, (0.0, 1e-9), t_eval=[0.0])
            dth = float(run.theta_unwrapped[0] - th)
            dps = float(run.psi[0]) * rescale
            meas = phase_shift_oracle(field, orbit, th, delta, k=floq.k, horizon=horizon, cfg=cfg)
            perr[i, j] = abs(dth - meas)
            try:
                ps = isostable_shift_oracle(field, orbit, floq, th, delta, cfg=cfg)
                serr[i, j] = abs(dps - ps)
            except OracleUnavailable as exc:
                notes.append(f"theta={th:.4g}, |delta|={m:g}: {exc}")
    return ComparisonReport(ths, mags, d, perr, serr, _slope(mags, np.max(perr, axis=0)),
                            _slope(mags, np.nanmax(serr, axis=0) if np.any(np.isfinite(serr)) else serr[0]),
                            rescale, notes)
