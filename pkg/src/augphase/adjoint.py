"""Phase and isostable response curves from the adjoint equations, plus brute-force oracles.

The PRC ``Z`` solves ``Z' = -DF^T Z`` and is obtained by integrating
backward in time, where every mode except the neutral one decays.  The IRC
``I`` solves ``I' = (k - DF^T) I``; its periodic solution is the eigenvector
of the one-period fundamental matrix with eigenvalue 1.  The orbit is taken
from the dense output of the periodic-orbit solve, so no backward integration
of the (unstable backward) state equation is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .floquet import FloquetData
from .odecore import IntegratorConfig, VectorField, find_events, integrate, solve
from .orbit import PeriodicOrbit, first_return

__all__ = [
    "AdjointError",
    "OracleUnavailable",
    "ResponseCurve",
    "compute_prc",
    "compute_irc",
    "phase_shift_oracle",
    "isostable_shift_oracle",
]


class AdjointError(RuntimeError):
    pass


class OracleUnavailable(RuntimeError):
    """The brute-force oracle cannot resolve the quantity (e.g. multiplier underflow)."""


@dataclass(frozen=True)
class ResponseCurve:
    """Sampled response curve on ``theta_j = 2 pi j / N``.

    ``values`` has shape ``(N, n)``.  ``normalization`` records how the
    free constant was fixed; ``closure`` is ``|value(2 pi) - value(0)|``
    relative to the curve scale, measured by propagating one full period.
    """

    kind: str
    theta: np.ndarray
    values: np.ndarray
    normalization: dict
    closure: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _spline(self):
        sp = self.__dict__.get("_sp")
        if sp is None:
            th = np.append(self.theta, 2 * math.pi)
            vals = np.vstack([self.values, self.values[:1]])
            sp = CubicSpline(th, vals, axis=0, bc_type="periodic")
            object.__setattr__(self, "_sp", sp)
        return sp

    def __call__(self, theta):
        """Periodic cubic-spline interpolation at arbitrary phases."""
        th = np.mod(np.asarray(theta, dtype=float), 2 * math.pi)
        return self._spline()(th)


def _linear_cfg(orbit: PeriodicOrbit, rtol=None) -> IntegratorConfig:
    # double precision suffices for the linear systems once they are written in the
    # moving frame; error is controlled relative to each solution column's own size
    r = rtol if rtol is not None else max(min(orbit.cfg.rtol, 1e-12), 1e-13)
    return IntegratorConfig(rtol=r, atol=0.0, atol_rel=1e-3 * r)


def _frame_along(field: VectorField, orbit: PeriodicOrbit):
    """Moving orthonormal frame ``(Fhat, n = R Fhat)`` and the adjoint operator in it.

    In frame coordinates ``(u, h) = (Z . Fhat, Z . n)`` the adjoint equation
    ``Z' = -DF^T Z`` becomes lower triangular:

        u' = -c u,            c = Fhat^T J Fhat
        h' = -m h + s u,      m = n^T J n,  s = Fhat^T R J Fhat - Fhat^T J n

    so the tangential part (of size omega/|F|, huge near a saddle) never
    leaks roundoff into the normal part.
    """

    def frame(t):
        x = orbit.state_at_time(t)
        f = np.asarray(field(x), dtype=float)
        fh = f / math.hypot(f[0], f[1])
        nn = np.array([-fh[1], fh[0]])
        J = np.asarray(field.jac(x), dtype=float)
        c = fh @ J @ fh
        m = nn @ J @ nn
        rjf = np.array([-(J[1] @ fh), J[0] @ fh])
        s = fh @ rjf - fh @ (J @ nn)
        return fh, nn, np.array([[-c, 0.0], [s, -m]])

    return frame


class _Adjoint:
    """``y' = (shift I + A(t)) y`` with ``A = -DF^T`` in Cartesian or frame coordinates.

    ``basis[j]`` maps coordinates to Cartesian components at ``tgrid[j]``.
    """

    def __init__(self, field, orbit, method, shift, tgrid):
        n = field.dim
        if method == "auto":
            method = "frame" if n == 2 else "cartesian"
        if method not in ("frame", "cartesian"):
            raise ValueError(f"unknown method {method!r}")
        if method == "frame" and n != 2:
            raise ValueError("frame method needs a planar field")
        self.n, self.method, self.tgrid = n, method, tgrid
        eye = np.eye(n)
        if method == "frame":
            frame = _frame_along(field, orbit)
            self.gen = lambda t: shift * eye + frame(t)[2]
            self.basis = np.empty((tgrid.size, n, n))
            for j, t in enumerate(tgrid):
                fh, nn, _ = frame(t)
                self.basis[j] = np.column_stack([fh, nn])
        else:
            J = _jac_along(field, orbit)
            self.gen = lambda t: shift * eye - J(t).T
            self.basis = np.broadcast_to(eye, (tgrid.size, n, n))

    def propagator(self, t_from, cfg):
        """``Phi[j] = U(tgrid[j], t_from)`` sampled on the grid, one solve per column."""
        n = self.n
        phi = np.empty((self.tgrid.size, n, n))
        t_to = self.tgrid[0] if t_from == self.tgrid[-1] else self.tgrid[-1]
        for j in range(n):
            traj = solve(lambda t, y: self.gen(t) @ y, np.eye(n)[j], (t_from, t_to), cfg)
            phi[:, :, j] = np.asarray(traj(self.tgrid), dtype=float)
        return phi

    def to_cartesian(self, coords):
        return np.einsum("gij,gj->gi", self.basis, coords)


def _jac_along(field: VectorField, orbit: PeriodicOrbit):
    def J(t):
        return np.asarray(field.jac(orbit.state_at_time(t)), dtype=float)
    return J


def _grid(orbit: PeriodicOrbit, n_grid: int):
    if n_grid < 8:
        raise ValueError("n_grid must be >= 8")
    theta = 2 * math.pi * np.arange(n_grid) / n_grid
    return theta, np.append(theta / orbit.omega, orbit.period)


def compute_prc(field: VectorField, orbit: PeriodicOrbit, n_grid: int = 2048, *,
                tol: float = 1e-9, max_periods: int = 100, seed=None, method: str = "auto",
                cfg: IntegratorConfig | None = None) -> ResponseCurve:
    """PRC by backward integration of ``Z' = -DF(gamma(t))^T Z``.

    Starting from ``seed`` (default all ones) at ``t = T``, the solution is
    followed backward period by period.  Each period is rescaled so that
    ``Z(0) . F(gamma(0)) = omega``; the iteration stops once the sampled
    curves of consecutive periods differ by less than ``tol`` in sup norm
    relative to the curve scale.  The one-period propagator is integrated
    once and reused, so every period sees the same discretization and the
    period-to-period change reflects only the decaying transient; its
    contraction ratios (close to the Floquet multiplier) are stored in
    ``extras['contraction']``.

    ``method='frame'`` (the default for planar fields) writes the equation in
    the moving frame tangent/normal to the orbit, which stays accurate when
    ``|F|`` spans many decades (orbits grazing a saddle); ``'cartesian'``
    integrates the components directly.
    """
    n = field.dim
    T, w = orbit.period, orbit.omega
    theta, tgrid = _grid(orbit, n_grid)
    sys = _Adjoint(field, orbit, method, 0.0, tgrid)
    z = np.ones(n) if seed is None else np.asarray(seed, dtype=float)
    if z.shape != (n,) or not np.any(z):
        raise ValueError("seed must be a nonzero vector of the state dimension")
    phi = sys.propagator(T, cfg or _linear_cfg(orbit))
    if sys.method == "frame":
        fnorm0 = float(np.linalg.norm(field(orbit.state_at_time(0.0))))

        def flux(y0, z0):
            # Z . F at the anchor is u |F| in frame coordinates, free of cancellation
            return y0[0] * fnorm0
    else:
        F0 = np.asarray(field(orbit.anchor), dtype=float)

        def flux(y0, z0):
            return z0 @ F0

    y = np.linalg.solve(sys.basis[-1], z)
    prev = None
    changes = []
    for it in range(max_periods):
        coords = phi @ y
        vals = sys.to_cartesian(coords)
        c = flux(coords[0], vals[0])
        if c == 0 or not np.isfinite(c):
            raise AdjointError("adjoint solution orthogonal to the flow at the anchor")
        vals = vals * (w / c)
        y = coords[0] * (w / c)
        if prev is not None:
            changes.append(float(np.max(np.abs(vals - prev))) / float(np.max(np.abs(vals))))
            if changes[-1] < tol:
                break
        prev = vals
    else:
        raise AdjointError(f"PRC did not converge in {max_periods} periods (multiplier too close to 1?)")
    closure = float(np.max(np.abs(vals[-1] - vals[0]))) / float(np.max(np.abs(vals)))
    contraction = [b / a for a, b in zip(changes, changes[1:]) if a > 0]
    return ResponseCurve("PRC", theta, vals[:-1].copy(), {"type": "omega", "omega": w},
                         closure, {"periods": it + 1, "changes": changes, "contraction": contraction,
                                   "method": sys.method})


def compute_irc(field: VectorField, orbit: PeriodicOrbit, k: float, v, n_grid: int = 2048, *,
                normalization: str = "auto", method: str = "auto", defect_tol: float = 1e-6,
                cond_tol: float = 1e-3, cfg: IntegratorConfig | None = None) -> ResponseCurve:
    """IRC as the periodic solution of ``I' = (k - DF^T) I``.

    The one-period fundamental matrix is integrated forward; its eigenvector
    for the eigenvalue nearest 1 (defect below ``defect_tol``) is the initial
    value.  ``normalization='v'`` scales so that ``I(0) . v = 1``;
    ``'maxabs'`` scales by the largest absolute component over the grid,
    which suits spike-like curves.  ``'auto'`` picks ``'maxabs'`` for
    fast-slow fields, and otherwise ``'v'`` unless ``|I(0) . v|`` is below
    ``cond_tol`` (an isochron almost tangent to the flow, as near a
    homoclinic orbit), in which case it also falls back to ``'maxabs'``.
    ``method`` is as for :func:`compute_prc`.
    """
    n = field.dim
    v = np.asarray(v, dtype=float)
    if v.shape != (n,) or not math.isclose(float(np.linalg.norm(v)), 1.0, rel_tol=1e-9):
        raise ValueError("v must be a unit vector of the state dimension")
    auto = normalization == "auto"
    if auto:
        normalization = "maxabs" if field.fast_slow is not None else "v"
    if normalization not in ("v", "maxabs"):
        raise ValueError(f"unknown normalization {normalization!r}")
    theta, tgrid = _grid(orbit, n_grid)
    sys = _Adjoint(field, orbit, method, float(k), tgrid)
    phi = sys.propagator(0.0, cfg or _linear_cfg(orbit))
    mono = phi[-1]
    ev, evec = np.linalg.eig(mono)
    i = int(np.argmin(np.abs(ev - 1)))
    defect = float(abs(ev[i] - 1))
    if defect > defect_tol:
        raise AdjointError(f"no eigenvalue within {defect_tol:g} of 1 (defect {defect:.2e}); k inconsistent with orbit")
    e = np.real(evec[:, i])
    e_cart = sys.basis[0] @ e
    scale = float(np.linalg.norm(e_cart))
    e, e_cart = e / scale, e_cart / scale
    ev_dot = float(e_cart @ v)
    fallback = None
    if auto and normalization == "v" and abs(ev_dot) < cond_tol:
        normalization, fallback = "maxabs", f"|I(0).v| = {abs(ev_dot):.1e} below {cond_tol:g}"
    if normalization == "v":
        if abs(ev_dot) < cond_tol:
            raise AdjointError("v is nearly orthogonal to the IRC at the anchor; normalization ill-conditioned")
        y0 = e / ev_dot
    elif abs(ev_dot) >= cond_tol:
        y0 = e * math.copysign(1.0, ev_dot)
    else:
        nz = np.flatnonzero(np.abs(e_cart) > 1e-300)
        y0 = e * math.copysign(1.0, e_cart[nz[0]])
    vals = sys.to_cartesian(phi @ y0)
    norm = {"type": normalization, "v": v.copy(), "k": float(k), "i0_dot_v": ev_dot}
    if fallback:
        norm["fallback"] = fallback
    if normalization == "maxabs":
        m = float(np.max(np.abs(vals[:-1])))
        vals = vals / m
        norm["factor"] = m
    closure = float(np.max(np.abs(vals[-1] - vals[0]))) / float(np.max(np.abs(vals)))
    return ResponseCurve("IRC", theta, vals[:-1].copy(), norm, closure,
                         {"eigenvalues": ev, "defect": defect, "monodromy": mono, "method": sys.method})


def _horizon(orbit: PeriodicOrbit, k: float | None, horizon: float | None) -> float:
    if horizon is not None:
        return float(horizon)
    h = 2 * orbit.period
    if k is not None and k < 0:
        h = max(h, 20.0 / abs(k))
    return h


def _anchor_section(field: VectorField, orbit: PeriodicOrbit):
    x0 = np.asarray(orbit.anchor, dtype=float)
    f0 = np.asarray(field(x0), dtype=float)
    nvec = f0 / np.linalg.norm(f0)
    return x0, nvec


def phase_shift_oracle(field: VectorField, orbit: PeriodicOrbit, theta: float, delta, *,
                       k: float | None = None, horizon: float | None = None,
                       cfg: IntegratorConfig | None = None) -> float:
    """Asymptotic phase shift of ``gamma(theta) + delta`` by direct simulation.

    Both ``gamma(theta)`` and the perturbed point are integrated for at least
    ``max(2 T, 20/|k|)``; the crossing times of the anchor section after that
    horizon are compared and the offset is returned in radians, wrapped to
    ``(-pi, pi]``.  Positive means the perturbation advanced the phase.
    """
    delta = np.asarray(delta, dtype=float)
    if not np.any(delta):
        return 0.0
    cfg = cfg or orbit.cfg
    H = _horizon(orbit, k, horizon)
    T, w = orbit.period, orbit.omega
    x0, nvec = _anchor_section(field, orbit)
    start = np.asarray(orbit(theta), dtype=cfg.dtype)
    dt = cfg.dtype
    nv = np.asarray(nvec, dtype=dt)
    p = np.asarray(x0, dtype=dt)

    def ev(z):
        return float(np.dot(nv, np.asarray(z, dtype=dt) - p))

    def crossings(x):
        traj = integrate(field, x, (0.0, H + 2 * T), cfg)
        return np.array([float(t) for t, _ in find_events(traj, ev, +1, t_min=H)])

    t_ref = crossings(start)
    t_pert = crossings(start + np.asarray(delta, dtype=dt))
    if t_ref.size == 0 or t_pert.size == 0:
        raise AdjointError("no section crossings after the horizon")
    tr = t_ref[0]
    tp = t_pert[int(np.argmin(np.abs(t_pert - tr)))]
    dist = abs(tp - tr)
    if dist > 0.45 * T:
        raise AdjointError("perturbed trajectory did not settle near the reference phase")
    shift = w * (tr - tp)
    return float((shift + math.pi) % (2 * math.pi) - math.pi)


def isostable_shift_oracle(field: VectorField, orbit: PeriodicOrbit, floq: FloquetData,
                           theta: float, delta, *, cfg: IntegratorConfig | None = None) -> float:
    """Isostable coordinate of ``gamma(theta) + delta`` by direct simulation.

    The point is integrated to its first return to the line through the
    anchor along the isochron tangent ``v``; the coordinate ``s`` along that
    line, scaled by ``exp(-k t_return)``, is the isostable value.  The same
    functional applied to ``gamma(theta)`` is subtracted, so the result
    approximates ``I(theta) . delta`` with ``I(0) . v = 1``.
    """
    if floq.underflow:
        raise OracleUnavailable("Floquet multiplier underflowed; isostable oracle unavailable")
    delta = np.asarray(delta, dtype=float)
    if not np.any(delta):
        return 0.0
    cfg = cfg or orbit.cfg
    dt = cfg.dtype
    k = floq.k
    T = orbit.period
    v = np.asarray(floq.v, dtype=float)
    x0 = np.asarray(orbit.traj(orbit.traj.t.dtype.type(orbit.offset)), dtype=dt)
    F0 = np.asarray(field(np.asarray(x0, dtype=float)), dtype=float)
    nvec = np.array([-v[1], v[0]]) if v.size == 2 else F0 / np.linalg.norm(F0)
    if nvec @ F0 < 0:
        nvec = -nvec
    vd = np.asarray(v, dtype=dt)
    start = np.asarray(orbit(theta), dtype=dt)

    def psi(x):
        t, xe = first_return(field, x, x0, nvec, cfg, 2.5 * T)
        return float(np.dot(vd, xe - x0)), float(t)

    s_ref, t_ref = psi(start)
    s, t = psi(start + np.asarray(delta, dtype=dt))
    diff = s * math.exp(-k * t) - s_ref * math.exp(-k * t_ref)
    # roundoff in the returned point, expressed in isostable units; a small displacement is a
    # valid answer (tangent perturbations) only while this floor is well below |delta|
    res = 1e4 * float(np.finfo(dt).eps) * orbit.scale * math.exp(-k * max(t, t_ref))
    if res > 0.01 * float(np.linalg.norm(delta)):
        raise OracleUnavailable("isostable displacement after return is below roundoff resolution")
    return float(diff)
