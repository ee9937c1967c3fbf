"""ODE integration, dense output, event location and finite-difference Jacobians.

The adaptive scheme is the Dormand-Prince 5(4) pair with a PI step-size
controller and the standard quartic continuous extension.  The fixed-step
scheme is classical RK4 with cubic Hermite dense output.  Both can run in
``numpy.longdouble`` arithmetic, which the near-homoclinic model needs: its
orbit passes within ~1e-11 of a saddle and the period is set by perturbations
at the 1e-13 level, below what double-precision accumulation resolves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction as Fr
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "FastSlow",
    "IntegrationError",
    "EventNotFound",
    "IntegratorConfig",
    "Trajectory",
    "VectorField",
    "integrate",
    "solve",
    "locate_event",
    "find_events",
    "integrate_until",
    "jacobian_fd",
]


class IntegrationError(RuntimeError):
    """Raised when a run exhausts its step budget or produces nonfinite states."""


class EventNotFound(LookupError):
    """Raised when an event function never changes sign along a trajectory."""


@dataclass(frozen=True)
class FastSlow:
    """Fast-slow split ``mu x' = f(x, y)``, ``y' = g(x, y)`` of a planar field."""

    mu: float
    f: Callable[[np.ndarray], float]
    g: Callable[[np.ndarray], float]
    f_x: Callable[[np.ndarray], float]
    f_y: Callable[[np.ndarray], float]
    g_x: Callable[[np.ndarray], float]
    g_y: Callable[[np.ndarray], float]


@dataclass(frozen=True)
class VectorField:
    """Autonomous vector field ``dx/dt = rhs(x)`` on R^dim.

    ``jacobian`` and ``divergence`` are optional; when absent, :meth:`jac`
    falls back to central differences and :meth:`div` to the trace of the
    Jacobian.
    """

    dim: int
    rhs: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    divergence: Callable[[np.ndarray], float] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = ""
    fast_slow: FastSlow | None = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim!r}")

    def __call__(self, x):
        return self.rhs(x)

    def jac(self, x) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x))
        return jacobian_fd(self, x)

    def div(self, x) -> float:
        if self.divergence is not None:
            return self.divergence(x)
        return float(np.trace(self.jac(x)))


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``mode`` is ``"adaptive"`` (Dormand-Prince 5(4)) or ``"fixed"`` (RK4 with
    constant ``step``).  ``extended`` switches the arithmetic to
    ``numpy.longdouble``.  Tolerances are never clamped, so settings such as
    ``rtol=1e-15, atol=1e-30`` are honoured as given.  ``atol_rel`` adds an
    absolute tolerance proportional to the current max-norm of the state,
    which suits linear systems whose overall scale drifts by many decades.
    """

    mode: str = "adaptive"
    rtol: float = 1e-10
    atol: float = 1e-12
    step: float | None = None
    max_step: float = np.inf
    first_step: float | None = None
    max_steps: int = 2_000_000
    extended: bool = False
    atol_rel: float = 0.0

    def __post_init__(self):
        if self.mode not in ("adaptive", "fixed"):
            raise ValueError(f"unknown integrator mode {self.mode!r}")
        if self.mode == "fixed":
            if self.step is None or not self.step > 0:
                raise ValueError("fixed mode needs step > 0")
        else:
            if not self.rtol > 0:
                raise ValueError("rtol must be > 0")
            if not self.atol >= 0:
                raise ValueError("atol must be >= 0")
            if not self.atol_rel >= 0:
                raise ValueError("atol_rel must be >= 0")
        if not self.max_step > 0:
            raise ValueError("max_step must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def dtype(self):
        return np.longdouble if self.extended else np.float64

    def replace(self, **changes) -> "IntegratorConfig":
        from dataclasses import replace

        return replace(self, **changes)


# Dormand-Prince 5(4) tableau, kept as exact fractions so the longdouble
# version is as accurate as the arithmetic allows.
_DP_C = [Fr(0), Fr(1, 5), Fr(3, 10), Fr(4, 5), Fr(8, 9), Fr(1), Fr(1)]
_DP_A = [
    [],
    [Fr(1, 5)],
    [Fr(3, 40), Fr(9, 40)],
    [Fr(44, 45), Fr(-56, 15), Fr(32, 9)],
    [Fr(19372, 6561), Fr(-25360, 2187), Fr(64448, 6561), Fr(-212, 729)],
    [Fr(9017, 3168), Fr(-355, 33), Fr(46732, 5247), Fr(49, 176), Fr(-5103, 18656)],
    [Fr(35, 384), Fr(0), Fr(500, 1113), Fr(125, 192), Fr(-2187, 6784), Fr(11, 84)],
]
_DP_E = [
    Fr(-71, 57600), Fr(0), Fr(71, 16695), Fr(-71, 1920),
    Fr(17253, 339200), Fr(-22, 525), Fr(1, 40),
]
# continuous extension: y(t0 + s h) = y0 + h * sum_i K_i * (P_i . [s, s^2, s^3, s^4])
_DP_P = [
    [Fr(1), Fr(-8048581381, 2820520608), Fr(8663915743, 2820520608), Fr(-12715105075, 11282082432)],
    [Fr(0), Fr(0), Fr(0), Fr(0)],
    [Fr(0), Fr(131558114200, 32700410799), Fr(-68118460800, 10900136933), Fr(87487479700, 32700410799)],
    [Fr(0), Fr(-1754552775, 470086768), Fr(14199869525, 1410260304), Fr(-10690763975, 1880347072)],
    [Fr(0), Fr(127303824393, 49829197408), Fr(-318862633887, 49829197408), Fr(701980252875, 199316789632)],
    [Fr(0), Fr(-282668133, 205662961), Fr(2019193451, 616988883), Fr(-1453857185, 822651844)],
    [Fr(0), Fr(40617522, 29380423), Fr(-110615467, 29380423), Fr(69997945, 29380423)],
]


def _as(dtype, q: Fr):
    return dtype(q.numerator) / dtype(q.denominator)


class _Tableau:
    def __init__(self, dtype):
        self.dtype = dtype
        self.c = np.array([_as(dtype, q) for q in _DP_C], dtype=dtype)
        self.a = [np.array([_as(dtype, q) for q in row], dtype=dtype) for row in _DP_A]
        self.e = np.array([_as(dtype, q) for q in _DP_E], dtype=dtype)
        self.p = np.array([[_as(dtype, q) for q in row] for row in _DP_P], dtype=dtype)


_TABLEAUS: dict = {}


def _tableau(dtype) -> _Tableau:
    key = np.dtype(dtype).str
    if key not in _TABLEAUS:
        _TABLEAUS[key] = _Tableau(dtype)
    return _TABLEAUS[key]


class Trajectory:
    """Ordered samples ``(t_i, y_i)`` plus per-step dense-output data.

    Calling the trajectory at a time (or array of times) inside its span
    evaluates the continuous extension of the step containing it.  At a
    stored sample time the stored state is returned.
    """

    def __init__(self, t, y, dense, method: str):
        self.t = t
        self.y = y
        self._dense = dense
        self.method = method
        self._sign = 1 if len(t) < 2 or t[-1] >= t[0] else -1
        self._key = self._sign * t
        self._lo, self._hi = (t[0], t[-1]) if self._sign > 0 else (t[-1], t[0])

    @property
    def t0(self):
        return self.t[0]

    @property
    def t1(self):
        return self.t[-1]

    @property
    def x0(self):
        return self.y[0]

    @property
    def x1(self):
        return self.y[-1]

    @property
    def nsteps(self) -> int:
        return len(self.t) - 1

    def __len__(self):
        return len(self.t)

    def _locate(self, tq):
        idx = np.searchsorted(self._key, self._sign * tq, side="right") - 1
        return np.clip(idx, 0, max(len(self.t) - 2, 0))

    def __call__(self, tq):
        scalar = np.ndim(tq) == 0
        tq = np.atleast_1d(np.asarray(tq, dtype=self.t.dtype))
        lo, hi = self._lo, self._hi
        slack = 1e-12 * max(hi - lo, 1.0)
        if tq.min() < lo - slack or tq.max() > hi + slack:
            raise ValueError("requested time outside the trajectory span")
        if len(self.t) == 1:
            out = np.repeat(self.y[:1], len(tq), axis=0)
            return out[0] if scalar else out
        idx = self._locate(tq)
        t_a = self.t[idx]
        h = self.t[idx + 1] - t_a
        s = (tq - t_a) / h
        out = self._dense(idx, s, h)
        exact = tq == self.t[idx]
        if np.any(exact):
            out[exact] = self.y[idx[exact]]
        return out[0] if scalar else out


def _dp_dense(y, K, P):
    def ev(idx, s, h):
        # powers s, s^2, s^3, s^4 -> (q, 4)
        pw = np.stack([s, s * s, s ** 3, s ** 4], axis=-1)
        coef = pw @ P.T  # (q, 7)
        incr = np.einsum("qs,qsn->qn", coef, K[idx])
        return y[idx] + h[:, None] * incr

    return ev


def _hermite_dense(y, F):
    def ev(idx, s, h):
        s = s[:, None]
        h = h[:, None]
        y0, y1 = y[idx], y[idx + 1]
        f0, f1 = F[idx], F[idx + 1]
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    return ev


class _Stepper:
    """Step-by-step integrator shared by :func:`solve` and :func:`integrate_until`."""

    def __init__(self, fun, x0, t0, t_end, cfg: IntegratorConfig):
        dt = cfg.dtype
        self.fun = fun
        self.cfg = cfg
        self.dt = dt
        self.t = dt(t0)
        self.t_end = dt(t_end)
        self.direction = 1 if self.t_end >= self.t else -1
        self.x = np.array(x0, dtype=dt).reshape(-1)
        if not np.all(np.isfinite(self.x)):
            raise IntegrationError("nonfinite initial state")
        self.n = self.x.size
        self.f = self._eval(self.t, self.x)
        self.ts = [self.t]
        self.xs = [self.x.copy()]
        self.dense = []
        self.nsteps = 0
        if cfg.mode == "adaptive":
            self.tab = _tableau(dt)
            self.h = self._initial_step() if cfg.first_step is None else dt(cfg.first_step)
            self.err_prev = 1e-4
            self.fs = None
        else:
            self.fs = [self.f.copy()]

    def _eval(self, t, x):
        f = np.asarray(self.fun(t, x), dtype=self.dt).reshape(-1)
        if f.size != self.n:
            raise ValueError(f"rhs returned {f.size} components for a state of dimension {self.n}")
        return f

    def _initial_step(self):
        cfg = self.cfg
        if not np.all(np.isfinite(np.asarray(self.f, dtype=float))):
            raise IntegrationError(f"nonfinite derivative at t={float(self.t)}")
        # step-size guess only; floor the weights so exact zeros with atol ~ 0 stay finite
        ax = np.abs(np.asarray(self.x, dtype=float))
        scale = cfg.atol + cfg.rtol * np.maximum(ax, 1e-3 * float(ax.max(initial=0.0)))
        scale = np.where(scale > 0, scale, 1e-300)
        with np.errstate(over="ignore"):
            d0 = float(np.sqrt(np.mean((ax / scale) ** 2)))
            d1 = float(np.sqrt(np.mean((np.asarray(self.f, dtype=float) / scale) ** 2)))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 or not np.isfinite(d0 / d1) else 0.01 * d0 / d1
        if not h0 > 0:
            h0 = 1e-6
        h0 = min(h0, float(abs(self.t_end - self.t)) or 1.0, cfg.max_step)
        x1 = self.x + self.direction * h0 * self.f
        f1 = self._eval(self.t + self.direction * h0, x1)
        with np.errstate(over="ignore"):
            d2 = float(np.sqrt(np.mean((np.asarray(f1 - self.f, dtype=float) / scale) ** 2))) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return self.dt(min(100 * h0, h1, cfg.max_step))

    @property
    def done(self):
        return (self.t_end - self.t) * self.direction <= 0

    def step(self):
        """Advance one accepted step; returns ``(t_old, x_old, t_new, x_new)``."""
        if self.nsteps >= self.cfg.max_steps:
            raise IntegrationError(f"step budget of {self.cfg.max_steps} exhausted at t={float(self.t)}")
        if self.cfg.mode == "fixed":
            return self._step_rk4()
        return self._step_dp()

    def _finish(self, t_new, x_new, f_new):
        if not np.all(np.isfinite(x_new)):
            raise IntegrationError(f"nonfinite state encountered at t={float(t_new)}")
        t_old, x_old = self.t, self.x
        self.t, self.x, self.f = t_new, x_new, f_new
        self.ts.append(t_new)
        self.xs.append(x_new.copy())
        self.nsteps += 1
        return t_old, x_old, t_new, x_new

    def _step_rk4(self):
        dt = self.dt
        remaining = (self.t_end - self.t) * self.direction
        h = min(dt(self.cfg.step), remaining) * self.direction
        t, x, f = self.t, self.x, self.f
        k1 = f
        k2 = self._eval(t + h / 2, x + h / 2 * k1)
        k3 = self._eval(t + h / 2, x + h / 2 * k2)
        k4 = self._eval(t + h, x + h * k3)
        x_new = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t_new = self.t_end if abs(remaining - abs(h)) == 0 else t + h
        f_new = self._eval(t_new, x_new)
        self.fs.append(f_new.copy())
        return self._finish(t_new, x_new, f_new)

    def _step_dp(self):
        cfg, tab, dt = self.cfg, self.tab, self.dt
        t, x = self.t, self.x
        max_step = dt(cfg.max_step) if np.isfinite(cfg.max_step) else None
        h = abs(self.h)
        while True:
            if max_step is not None:
                h = min(h, max_step)
            remaining = (self.t_end - t) * self.direction
            last = h >= remaining
            if last:
                h = remaining
            hs = h * self.direction
            K = np.empty((7, self.n), dtype=dt)
            K[0] = self.f
            for i in range(1, 7):
                xi = x + hs * (tab.a[i] @ K[:i])
                K[i] = self._eval(t + tab.c[i] * hs, xi)
            x_new = x + hs * (tab.a[6] @ K[:6])
            t_new = self.t_end if last else t + hs
            if t_new == t:
                raise IntegrationError(f"step size underflow at t={float(t)}")
            err = hs * (tab.e @ K)
            ax = np.maximum(np.abs(x), np.abs(x_new))
            scale = cfg.atol + cfg.rtol * ax
            if cfg.atol_rel:
                scale = scale + cfg.atol_rel * ax.max()
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(scale > 0, err / scale, np.where(err == 0, 0.0, np.inf))
            en = float(np.sqrt(np.mean(ratio.astype(np.float64) ** 2)))
            if not np.isfinite(en) and not np.all(np.isfinite(x_new)):
                raise IntegrationError(f"nonfinite state encountered near t={float(t)}")
            if en <= 1.0:
                if en == 0.0:
                    fac = 5.0
                else:
                    fac = 0.9 * en ** (-0.7 / 5) * self.err_prev ** (0.4 / 5)
                    fac = min(5.0, max(0.2, fac))
                self.err_prev = max(en, 1e-4)
                self.h = h * dt(fac)
                self.dense.append(K)
                return self._finish(t_new, x_new, K[6])
            fac = 0.9 * en ** -0.2 if np.isfinite(en) else 0.1
            h = h * dt(max(0.1, fac))
            if h <= 16 * np.finfo(dt).eps * max(abs(t), dt(1)):
                raise IntegrationError(f"step size underflow at t={float(t)}")

    def last_step(self) -> Trajectory:
        """Dense trajectory covering only the most recent accepted step."""
        dt = self.dt
        t = np.array(self.ts[-2:], dtype=dt)
        y = np.array(self.xs[-2:], dtype=dt).reshape(2, self.n)
        if self.cfg.mode == "fixed":
            F = np.array(self.fs[-2:], dtype=dt).reshape(2, self.n)
            return Trajectory(t, y, _hermite_dense(y, F), "rk4")
        K = np.array(self.dense[-1:], dtype=dt).reshape(1, 7, self.n)
        return Trajectory(t, y, _dp_dense(y, K, self.tab.p), "dopri5")

    def trajectory(self) -> Trajectory:
        dt = self.dt
        t = np.array(self.ts, dtype=dt)
        y = np.array(self.xs, dtype=dt).reshape(len(self.ts), self.n)
        if self.cfg.mode == "fixed":
            F = np.array(self.fs, dtype=dt).reshape(len(self.ts), self.n)
            return Trajectory(t, y, _hermite_dense(y, F), "rk4")
        K = np.array(self.dense, dtype=dt).reshape(len(self.dense), 7, self.n)
        return Trajectory(t, y, _dp_dense(y, K, self.tab.p), "dopri5")


def solve(fun, x0, t_span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the possibly nonautonomous ``x' = fun(t, x)`` over ``t_span``."""
    cfg = cfg or IntegratorConfig()
    t0, t1 = t_span
    if not (np.isfinite(float(t0)) and np.isfinite(float(t1))):
        raise ValueError("t_span must be finite")
    st = _Stepper(fun, x0, t0, t1, cfg)
    while not st.done:
        st.step()
    return st.trajectory()


def _autonomous(field):
    rhs = field.rhs if isinstance(field, VectorField) else field
    return lambda t, x: rhs(x)


def integrate(field: VectorField, x0, t_span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate an autonomous field from ``x0`` over ``t_span = (t0, t1)``."""
    x0 = np.asarray(x0)
    if isinstance(field, VectorField) and x0.size != field.dim:
        raise ValueError(f"initial state has dimension {x0.size}, field has {field.dim}")
    return solve(_autonomous(field), x0, t_span, cfg)


def _illinois(g, a, b, ga, gb, ftol, tdt):
    """Bracketed root of scalar ``g`` on ``[a, b]`` (Illinois variant of regula falsi)."""
    side = 0
    for _ in range(200):
        c = (a * gb - b * ga) / (gb - ga)
        if not (min(a, b) <= c <= max(a, b)):
            c = (a + b) / 2
        gc = g(c)
        if abs(gc) <= ftol or abs(b - a) <= 4 * np.finfo(tdt).eps * max(abs(a), abs(b), 1):
            return c
        if (gc > 0) == (gb > 0):
            b, gb = c, gc
            if side == -1:
                ga /= 2
            side = -1
        else:
            a, ga = c, gc
            if side == 1:
                gb /= 2
            side = 1
    return c


def _crossings(traj: Trajectory, event, direction: int = 0, t_min=None, first_only=False):
    vals = np.array([float(event(x)) for x in traj.y])
    out = []
    sgn = traj._sign
    for i in range(len(vals) - 1):
        g0, g1 = vals[i], vals[i + 1]
        if t_min is not None and sgn * traj.t[i + 1] <= sgn * t_min:
            continue
        if g0 == 0 and i > 0:
            continue
        up = g0 < 0 <= g1 or (g0 == 0 and g1 > 0)
        down = g0 > 0 >= g1 or (g0 == 0 and g1 < 0)
        if not (up or down):
            continue
        if (direction > 0 and not up) or (direction < 0 and not down):
            continue
        a, b = traj.t[i], traj.t[i + 1]
        scale = max(1.0, float(np.max(np.abs(traj.y[i]))))
        ftol = 1e-12 * scale
        if g1 == 0:
            tc = b
        elif g0 == 0:
            tc = a
        else:
            tc = _illinois(lambda s: float(event(traj(s))), a, b, g0, g1, ftol, traj.t.dtype)
        if t_min is not None and sgn * tc <= sgn * t_min:
            continue
        out.append((tc, traj(tc)))
        if first_only:
            break
    return out


def find_events(traj: Trajectory, event, direction: int = 0, t_min=None):
    """All sign changes of ``event(state)`` along ``traj`` as ``(time, state)`` pairs."""
    return _crossings(traj, event, direction, t_min)


def locate_event(traj: Trajectory, event, direction: int = 0, t_min=None):
    """First sign change of ``event(state)`` along ``traj``.

    ``direction`` restricts to upward (+1) or downward (-1) crossings.  The
    root is refined on the dense output until ``|event| < 1e-12 * scale``.
    """
    hits = _crossings(traj, event, direction, t_min, first_only=True)
    if not hits:
        raise EventNotFound("event function has no sign change along the trajectory")
    return hits[0]


def integrate_until(field_or_fun, x0, event, *, direction: int = 0, count: int = 1,
                    t_max: float, cfg: IntegratorConfig | None = None, t0: float = 0.0,
                    min_time: float = 0.0):
    """Integrate until the ``count``-th crossing of ``event`` after ``min_time``.

    Returns ``(crossings, trajectory)`` where crossings is a list of
    ``(time, state)``.  Raises :class:`EventNotFound` if ``t_max`` is reached
    first.
    """
    cfg = cfg or IntegratorConfig()
    fun = field_or_fun
    if isinstance(field_or_fun, VectorField):
        fun = _autonomous(field_or_fun)
    st = _Stepper(fun, x0, t0, t0 + t_max, cfg)
    hits = []
    g_old = float(event(st.x))
    t_floor = st.dt(t0) + st.dt(min_time)
    while not st.done:
        t_a, x_a, t_b, x_b = st.step()
        g_new = float(event(x_b))
        crossed = (g_old < 0 <= g_new) if direction > 0 else (g_old > 0 >= g_new) if direction < 0 \
            else (g_old < 0 <= g_new or g_old > 0 >= g_new)
        if crossed and t_b > t_floor:
            piece = st.last_step()
            found = _crossings(piece, event, direction, t_min=t_floor if t_a < t_floor else None)
            hits.extend(found[:1])
            if len(hits) >= count:
                return hits, st.trajectory()
        g_old = g_new
    raise EventNotFound(f"fewer than {count} crossings within t_max={t_max}")


def jacobian_fd(field, x) -> np.ndarray:
    """Central-difference Jacobian with steps ``1e-6 * max(1, |x_i|)``."""
    rhs = field.rhs if isinstance(field, VectorField) else field
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    J = np.empty((n, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.asarray(rhs(xp), dtype=np.float64) - np.asarray(rhs(xm), dtype=np.float64)) / (xp[i] - xm[i])
    if not np.all(np.isfinite(J)):
        raise ValueError("nonfinite Jacobian entries")
    return J
