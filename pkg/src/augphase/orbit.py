"""Stable periodic orbits: relaxation, Newton shooting on a return map, phase anchoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .odecore import (
    EventNotFound,
    IntegratorConfig,
    Trajectory,
    VectorField,
    find_events,
    integrate,
    integrate_until,
)

__all__ = [
    "OrbitError",
    "PeriodicOrbit",
    "find_periodic_orbit",
    "set_phase_anchor",
    "sample_orbit",
    "first_return",
]


class OrbitError(RuntimeError):
    """No oscillation detected, or Newton shooting failed to converge."""


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic orbit parameterized by phase ``theta = omega * t``.

    ``traj`` covers one period starting at the base point found by shooting;
    ``offset`` is the time along ``traj`` of the current ``theta = 0`` anchor.
    """

    field: VectorField
    anchor: np.ndarray
    period: float
    traj: Trajectory
    offset: float = 0.0
    closure: float = 0.0
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.period

    @property
    def dim(self) -> int:
        return self.field.dim

    def state_at_time(self, t):
        """State at time ``t`` after the anchor (any real ``t``, wrapped mod T)."""
        T = self.traj.t[-1]
        tau = np.mod(np.asarray(t, dtype=self.traj.t.dtype) + self.traj.t.dtype.type(self.offset), T)
        return np.asarray(self.traj(tau), dtype=np.float64)

    def __call__(self, theta):
        """State at phase ``theta``; ``theta = 0`` returns the anchor exactly."""
        if np.ndim(theta) == 0 and float(theta) % (2 * math.pi) == 0.0:
            return self.anchor.copy()
        return self.state_at_time(np.asarray(theta, dtype=float) / self.omega)

    def samples(self, n: int = 1000):
        return sample_orbit(self, n)

    @property
    def scale(self) -> float:
        """Characteristic size of the orbit (max state norm over one period)."""
        return float(max(1e-300, np.max(np.linalg.norm(np.asarray(self.traj.y, dtype=float), axis=1))))


def _section_basis(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the hyperplane orthogonal to ``normal``."""
    n = normal.size
    q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    return q[:, 1:n]


def first_return(field: VectorField, x, point, normal, cfg: IntegratorConfig, t_max: float,
                 direction: int = 1):
    """First crossing of the hyperplane through ``point`` with ``normal``.

    Crossings are only counted once the trajectory has visited the opposite
    side, so starting on the section does not register as a return.
    Returns ``(time, state)``.
    """
    point = np.asarray(point)
    normal = np.asarray(normal, dtype=float)
    dtype = cfg.dtype
    p = np.asarray(point, dtype=dtype)
    nv = np.asarray(normal, dtype=dtype)

    def ev(z):
        return float(np.dot(nv, z - p))

    arm_tol = 1e-9 * max(1.0, float(np.max(np.abs(np.asarray(point, dtype=float)))))
    hits, _ = integrate_until(field, x, _Armed(ev, direction, arm_tol), direction=direction,
                              count=1, t_max=t_max, cfg=cfg)
    return hits[0]


class _Armed:
    """Event wrapper that stays on the 'not crossed' side until the opposite side is visited."""

    def __init__(self, ev, direction, tol=0.0):
        self.ev = ev
        self.direction = direction if direction != 0 else 1
        self.tol = tol
        self.armed = False

    def __call__(self, z):
        g = self.ev(z)
        if not self.armed:
            if g * self.direction < -self.tol:
                self.armed = True
            else:
                return -self.direction * max(abs(g), 1e-300)
        return g


def find_periodic_orbit(field: VectorField, guess, cfg: IntegratorConfig | None = None, *,
                        max_relax: int = 50, relax_tol: float = 1e-10,
                        closure_tol: float = 1e-10, max_newton: int = 50,
                        t_max: float = 1e4) -> PeriodicOrbit:
    """Locate the stable periodic orbit attracting ``guess``.

    Three stages: relax by repeated returns to the section through ``guess``
    (until successive returns differ by less than ``relax_tol`` relative, or
    ``max_relax`` returns); re-section through the relaxed point with normal
    ``F(point)``; then Newton on the (n-1)-dimensional return map to a closure
    residual below ``closure_tol``.  The period is the return time of the
    converged point.
    """
    cfg = cfg or IntegratorConfig()
    x = np.asarray(guess, dtype=float).reshape(-1)
    if x.size != field.dim:
        raise ValueError("guess has wrong dimension")
    f0 = np.asarray(field(x), dtype=float)
    if not np.linalg.norm(f0) > 0:
        raise OrbitError("guess is an equilibrium")
    normal = f0 / np.linalg.norm(f0)
    point = x.copy()
    prev = None
    t_ret = None
    cur = np.asarray(x, dtype=cfg.dtype)
    for _ in range(max_relax):
        try:
            t_ret, cur = first_return(field, cur, point, normal, cfg, t_max)
        except EventNotFound as exc:
            raise OrbitError("no returns to the section detected; not oscillating?") from exc
        if prev is not None:
            scale = max(1.0, float(np.max(np.abs(cur))))
            if float(np.max(np.abs(np.asarray(cur - prev, dtype=float)))) < relax_tol * scale:
                break
        prev = cur
    # shooting section through the relaxed point
    xr = np.asarray(cur, dtype=cfg.dtype)
    fr = np.asarray(field(xr), dtype=float)
    normal = fr / np.linalg.norm(fr)
    W = _section_basis(normal).astype(cfg.dtype)
    scale = max(1.0, float(np.max(np.abs(np.asarray(xr, dtype=float)))))
    bound = 3 * float(t_ret)

    def ret(s):
        start = xr + W @ s
        t, xe = first_return(field, start, xr, normal, cfg, bound)
        return t, W.T @ (xe - xr)

    s = np.zeros(field.dim - 1, dtype=cfg.dtype)
    for it in range(max_newton + 1):
        t_s, r_s = ret(s)
        resid = r_s - s
        if float(np.max(np.abs(np.asarray(resid, dtype=float)))) < closure_tol * scale:
            break
        if it == max_newton:
            raise OrbitError(f"Newton shooting stagnated after {max_newton} iterations")
        m = s.size
        D = np.empty((m, m), dtype=float)
        h = 1e-7 * scale
        for j in range(m):
            e = np.zeros(m, dtype=cfg.dtype)
            e[j] = h
            _, rp = ret(s + e)
            _, rm = ret(s - e)
            D[:, j] = np.asarray((rp - rm) / (2 * h), dtype=float)
        step = np.linalg.solve(D - np.eye(m), -np.asarray(resid, dtype=float))
        s = s + step.astype(cfg.dtype)
    x0 = xr + W @ s
    period = t_s
    traj = integrate(field, x0, (0.0, period), cfg)
    closure = float(np.linalg.norm(np.asarray(traj.x1 - x0, dtype=float)))
    return PeriodicOrbit(field, np.asarray(x0, dtype=float), float(period), traj, 0.0, closure, cfg)


def set_phase_anchor(orbit: PeriodicOrbit, anchor_event, direction: int = 0) -> PeriodicOrbit:
    """Re-base ``theta = 0`` to the first crossing of ``anchor_event`` at or after the anchor.

    ``direction`` selects upward (+1) or downward (-1) crossings.  Period and
    frequency are unchanged.  Re-basing twice with the same event is a no-op.
    """
    traj = orbit.traj
    T = float(traj.t[-1])
    hits = find_events(traj, lambda z: float(anchor_event(np.asarray(z, dtype=float))), direction)
    if not hits:
        raise EventNotFound("anchor event has no crossing on the orbit")
    slack = 1e-9 * T
    best = None
    for tc, _ in hits:
        tau = (float(tc) - orbit.offset) % T
        if tau > T - slack:
            tau -= T
        if best is None or tau < best[0]:
            best = (tau, tc)
    new_offset = (orbit.offset + best[0]) % T
    anchor = np.asarray(traj(traj.t.dtype.type(new_offset)), dtype=float)
    return PeriodicOrbit(orbit.field, anchor, orbit.period, traj, new_offset, orbit.closure, orbit.cfg)


def sample_orbit(orbit: PeriodicOrbit, n: int = 1000):
    """``n`` states equispaced in phase, ``theta_j = 2 pi j / n``.

    Returns ``(theta, states)`` with ``states[0]`` equal to the anchor.
    """
    if n < 8:
        raise ValueError("need at least 8 samples")
    theta = 2 * math.pi * np.arange(n) / n
    states = orbit.state_at_time(theta / orbit.omega)
    states[0] = orbit.anchor
    return theta, states
