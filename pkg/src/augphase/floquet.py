"""Nontrivial Floquet exponent, multiplier and isochron direction of a planar orbit.

Two independent routes: the period mean of the divergence, and the slope of
the Poincare return map measured from a ladder of launches along the
isochron.  A third, the period mean of the normal stretching rate
``n^T DF n``, uses only the Jacobian and serves as the cross-check when the
return map underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .odecore import EventNotFound, IntegratorConfig, VectorField
from .orbit import PeriodicOrbit, first_return

__all__ = [
    "FloquetData",
    "FloquetError",
    "QuadratureError",
    "floquet_divergence",
    "floquet_normal_stretching",
    "isochron_direction",
    "monodromy_poincare",
    "relaxation_exponent_decomposition",
    "orbit_mean",
]


class FloquetError(RuntimeError):
    pass


class QuadratureError(FloquetError):
    pass


@dataclass(frozen=True)
class FloquetData:
    """Nontrivial exponent ``k``, multiplier ``lam`` and unit isochron tangent ``v``.

    ``method`` records where ``lam`` came from (``"monodromy"`` or
    ``"divergence"``); ``underflow`` is set when the return-map slope was
    below integrator resolution and ``lam`` was taken as ``exp(k T)``.
    """

    k: float
    lam: float
    v: np.ndarray
    method: str
    underflow: bool = False
    extras: dict = field(default_factory=dict)


def _eval_on_states(fn, states: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(states.T), dtype=float)
        if out.shape == (states.shape[0],):
            return out
    except Exception:  # noqa: BLE001 - fall back to a per-point loop for non-vectorized callbacks
        pass
    return np.array([float(fn(s)) for s in states])


def orbit_mean(fn, orbit: PeriodicOrbit, n: int = 1024, rtol: float = 1e-10,
               max_n: int = 1 << 20, accept: float = 1e-6):
    """Period mean of ``fn(state)`` by the periodic trapezoid rule.

    ``n`` doubles until successive estimates agree to ``rtol`` (relative, with
    an absolute floor of ``rtol``); if that never happens, the result is still
    accepted when the last change is below ``accept``.  Returns
    ``(mean, n_used, last_change)``.
    """
    T = orbit.period
    prev = None
    n = max(8, int(n))
    change = math.inf
    while True:
        t = T * np.arange(n) / n
        val = float(np.mean(_eval_on_states(fn, orbit.state_at_time(t))))
        if prev is not None:
            change = abs(val - prev) / max(abs(val), 1.0)
            if change < rtol:
                return val, n, change
        if n >= max_n:
            break
        prev = val
        n *= 2
    if change < accept:
        return val, n, change
    raise QuadratureError(f"orbit quadrature did not converge (last relative change {change:.2e})")


def floquet_divergence(field: VectorField, orbit: PeriodicOrbit, n: int = 1024,
                       rtol: float = 1e-10) -> float:
    """``k = (1/T) * integral of div F along the orbit``, refined by doubling ``n``."""
    k, _, _ = orbit_mean(field.div, orbit, n, rtol)
    return k


def floquet_normal_stretching(field: VectorField, orbit: PeriodicOrbit, n: int = 1024,
                              rtol: float = 1e-10) -> float:
    """Planar ``k`` as the period mean of ``n^T DF n`` with ``n`` the unit normal to ``F``.

    The tangential stretching integrates to zero over a period, so this equals
    the divergence mean analytically but is evaluated from the Jacobian alone.
    """
    if field.dim != 2:
        raise ValueError("normal stretching rate is defined for planar fields")

    def rate(z):
        z = np.asarray(z, dtype=float)
        f = np.asarray(field(z), dtype=float)
        nrm = np.hypot(f[0], f[1])
        nx, ny = -f[1] / nrm, f[0] / nrm
        J = field.jac(z)
        return nx * (J[0][0] * nx + J[0][1] * ny) + ny * (J[1][0] * nx + J[1][1] * ny)

    k, _, _ = orbit_mean(rate, orbit, n, rtol)
    return k


def isochron_direction(prc_at_zero) -> np.ndarray:
    """Unit vector orthogonal to the PRC, first nonzero component positive."""
    z = np.asarray(prc_at_zero, dtype=float)
    if z.size != 2:
        raise ValueError("isochron direction from the PRC needs a planar system")
    u = np.array([-z[1], z[0]])
    u = u / np.linalg.norm(u)
    for c in u:
        if abs(c) > 1e-300:
            if c < 0:
                u = -u
            break
    return u


def monodromy_poincare(field: VectorField, orbit: PeriodicOrbit, prc_at_zero, *,
                       cfg: IntegratorConfig | None = None, section_normal=None,
                       deltas=None, k_divergence: float | None = None,
                       transversal_tol: float = 1e-6) -> FloquetData:
    """Return-map slope along the isochron at the anchor.

    Launches ``x0 +/- delta * w`` for 4 deltas log-spaced in ``[1e-8, 1e-5]``
    times the orbit scale, where ``w`` spans the section line (by default the
    isochron tangent ``u``, orthogonal to the PRC).  The least-squares slope
    of first-return displacement against launch displacement is the
    multiplier.  When the isochron is within ``transversal_tol`` of tangent
    to the flow the section normal to ``F`` is used instead.  When the
    displacements are at roundoff level the result falls back to
    ``lam = exp(k T)`` from the divergence and is flagged as underflow.
    """
    cfg = cfg or orbit.cfg
    x0 = np.asarray(orbit.anchor, dtype=float)
    T = orbit.period
    u = isochron_direction(prc_at_zero)
    F0 = np.asarray(field(x0), dtype=float)
    section = "isochron"
    if section_normal is None:
        nvec = np.array([-u[1], u[0]])
        if abs(nvec @ F0) < transversal_tol * np.linalg.norm(F0):
            # isochron nearly tangent to the flow (orbits grazing a saddle); any
            # transversal section has the same multiplier, so use the flow-normal one
            nvec = F0 / np.linalg.norm(F0)
            section = "flow-normal"
    else:
        nvec = np.asarray(section_normal, dtype=float)
        nvec = nvec / np.linalg.norm(nvec)
        section = "given"
    if abs(nvec @ F0) < 1e-8 * np.linalg.norm(F0):
        raise FloquetError("section is not transversal to the flow")
    if nvec @ F0 < 0:
        nvec = -nvec
    w = np.array([-nvec[1], nvec[0]])
    scale = orbit.scale
    if deltas is None:
        deltas = np.logspace(-8, -5, 4) * scale
    deltas = np.asarray(deltas, dtype=float)
    # float64 rounding of the returned point (~eps |x0|) is comparable to lam * delta for
    # strongly contracting orbits, so the launches always run in extended precision
    if not cfg.extended:
        cfg = cfg.replace(extended=True)
    dt = cfg.dtype
    x0d = np.asarray(orbit.traj(orbit.traj.t.dtype.type(orbit.offset)), dtype=dt)
    wd = np.asarray(w, dtype=dt)

    def launch(d):
        start = x0d + dt(d) * wd
        t, xe = first_return(field, start, x0d, nvec, cfg, 3 * T)
        return float(np.dot(wd, xe - x0d)), float(t)

    if k_divergence is None:
        k_divergence = floquet_divergence(field, orbit)
    # launches and reference take different adaptive steps, so the floor is the larger of
    # roundoff in the working precision and the local error tolerance
    res = max(1e4 * float(np.finfo(dt).eps), 10 * cfg.rtol) * scale
    below = math.exp(k_divergence * T) * float(np.max(deltas)) < res

    s_ref, t_ref = launch(0.0)
    signed = np.concatenate([-deltas[::-1], deltas])
    disp = np.full(signed.size, np.nan)
    failed = []
    for i, d in enumerate(signed):
        try:
            disp[i] = launch(d)[0] - s_ref
        except EventNotFound:
            # launch crossed a separatrix (e.g. the stable manifold of a nearby saddle)
            failed.append(float(d))
    ratios = disp / signed
    good = np.abs(disp) > res
    extras = {"deltas": signed, "displacements": disp, "ratios": ratios,
              "resolved": good, "k_divergence": k_divergence, "return_time": t_ref,
              "section": section, "section_normal": nvec, "failed": failed}
    if failed:
        if not below:
            raise FloquetError(f"{len(failed)} launches did not return to the section; reduce delta")
        return FloquetData(k_divergence, math.exp(k_divergence * T), u, "divergence", True, extras)
    if good.sum() < 2:
        lam = math.exp(k_divergence * T)
        return FloquetData(k_divergence, lam, u, "divergence", True, extras)
    dg, sg = disp[good], signed[good]
    med = float(np.median(ratios[good]))
    spread = float(np.max(np.abs(ratios[good] - med))) / abs(med) if med != 0 else math.inf
    if not np.all(np.diff(dg) > 0) or spread > 0.05:
        raise FloquetError("return displacements are not monotone/linear in delta; reduce delta")
    lam = float(np.dot(sg, dg) / np.dot(sg, sg))
    if not 0 < lam < 1:
        raise FloquetError(f"multiplier {lam:.3g} outside (0, 1)")
    return FloquetData(math.log(lam) / T, lam, u, "monodromy", False, extras)


def relaxation_exponent_decomposition(field: VectorField, orbit: PeriodicOrbit, n: int = 1024,
                                      rtol: float = 1e-10) -> tuple[float, float]:
    """Period means ``a`` of ``f_x`` and ``b`` of ``g_y`` for a fast-slow field.

    ``k = a / mu + b``; a stable relaxation cycle needs ``a < 0``.
    """
    fs = field.fast_slow
    if fs is None:
        raise ValueError("field has no fast-slow form")
    a, _, _ = orbit_mean(fs.f_x, orbit, n, rtol)
    b, _, _ = orbit_mean(lambda z: fs.g_y(z) + 0.0 * np.asarray(z)[0], orbit, n, rtol)
    if not a < 0:
        raise FloquetError(f"mean f_x = {a:.4g} is not negative; orbit not stable in the relaxation limit")
    return a, b
