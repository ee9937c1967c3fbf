"""Model zoo and closed-form augmented phase reductions.

Six planar oscillators: a general lambda-omega system, the Hopf and Bautin
normal forms, a SNIPER normal form, a near-homoclinic model with a saddle at
the origin, and the van der Pol relaxation oscillator.  Each runnable field
carries an analytic Jacobian and divergence.  Polar normal forms are exposed
in Cartesian coordinates with phase measured from the positive-x crossing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

import numpy as np
from scipy.optimize import brentq

from .odecore import FastSlow, IntegratorConfig, VectorField

__all__ = [
    "ModelId",
    "Model",
    "AnalyticReduction",
    "PARAM_DEFAULTS",
    "make_model",
    "model_field",
    "default_guess",
    "integrator_defaults",
    "analytic_reduction",
    "homoclinic_analytic_k",
    "box_transit_time",
    "box_entry_distance",
    "relaxation_limit_orbit",
]


class ModelId(str, Enum):
    LAMBDA_OMEGA = "lambda_omega"
    HOPF = "hopf"
    BAUTIN = "bautin"
    SNIPER = "sniper"
    SANDSTEDE = "sandstede"
    VAN_DER_POL = "vdp"


# lambda-omega G and H are polynomial coefficient tuples in r (ascending powers)
PARAM_DEFAULTS: dict[ModelId, dict[str, Any]] = {
    ModelId.LAMBDA_OMEGA: {"G": (0.0, 1.0, 0.0, -1.0), "H": (1.0,)},
    ModelId.HOPF: {"a": 1.0, "b": 1.0, "c": -1.0, "d": 0.0},
    ModelId.BAUTIN: {"a": -0.5, "b": 1.0, "c": 2.0, "d": 0.0, "f": -1.0, "g": 0.0},
    ModelId.SNIPER: {"rho": 1.0, "eta": math.sqrt(2.0)},
    ModelId.SANDSTEDE: {"mu": 1e-13, "a": -1.0, "b": 2.0},
    ModelId.VAN_DER_POL: {"mu": 0.1},
}


@dataclass(frozen=True)
class Model:
    """A catalog model id with its fully resolved parameter set."""

    id: ModelId
    params: Mapping[str, Any]

    def __getitem__(self, key):
        return self.params[key]


def make_model(model_id, **overrides) -> Model:
    """Resolve parameters against the defaults table and check stability."""
    mid = ModelId(model_id)
    defaults = PARAM_DEFAULTS[mid]
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameter(s) for {mid.value}: {sorted(unknown)}")
    params = dict(defaults)
    for key, val in overrides.items():
        if isinstance(defaults[key], tuple):
            params[key] = val if callable(val) else tuple(float(v) for v in val)
        else:
            params[key] = float(val)
    model = Model(mid, params)
    _check_stability(model)
    return model


def _as_model(model, overrides=None) -> Model:
    if isinstance(model, Model):
        if overrides:
            return make_model(model.id, **{**model.params, **overrides})
        return model
    return make_model(model, **(overrides or {}))


# --------------------------------------------------------------------------
# radial (lambda-omega type) fields: x' = A(s) x - B(s) y, y' = B(s) x + A(s) y,
# s = r^2, G(r) = r A(r^2), H(r) = B(r^2)


@dataclass(frozen=True)
class _Radial:
    A: Callable[[Any], Any]
    dA: Callable[[Any], Any]
    B: Callable[[Any], Any]
    dB: Callable[[Any], Any]
    r_po: float

    def G(self, r):
        return r * self.A(r * r)

    def dG(self, r):
        s = r * r
        return self.A(s) + 2 * s * self.dA(s)

    def H(self, r):
        return self.B(r * r)

    def dH(self, r):
        return 2 * r * self.dB(r * r)


def _poly_in_s(coeffs):
    coeffs = list(coeffs)

    def p(s):
        out = 0.0 * s
        for c in reversed(coeffs):
            out = out * s + c
        return out

    dcoeffs = [i * c for i, c in enumerate(coeffs)][1:]

    def dp(s):
        out = 0.0 * s
        for c in reversed(dcoeffs):
            out = out * s + c
        return out

    return p, dp


def _radial_from_polar_poly(G: tuple, H: tuple) -> tuple:
    """G(r) must be odd in r and H(r) even so the field is smooth at the origin."""
    G = list(G) + [0.0] * (len(G) % 2)
    if any(G[i] != 0 for i in range(0, len(G), 2)):
        raise ValueError("G must contain only odd powers of r")
    if any(H[i] != 0 for i in range(1, len(H), 2)):
        raise ValueError("H must contain only even powers of r")
    a_coeffs = [G[i] for i in range(1, len(G), 2)]
    b_coeffs = [H[i] for i in range(0, len(H), 2)]
    return _poly_in_s(a_coeffs), _poly_in_s(b_coeffs)


def _stable_radius(A, dA, candidates) -> float:
    """Largest positive radius with G(r)=0 and G'(r) < 0."""
    good = []
    for s in candidates:
        if s > 0 and abs(A(s)) < 1e-10 * max(1.0, abs(s)) and 2 * s * dA(s) < 0:
            good.append(s)
    if not good:
        raise ValueError("radial equation has no stable positive root")
    return math.sqrt(max(good))


def _radial_structure(model: Model) -> _Radial:
    p = model.params
    if model.id is ModelId.HOPF:
        (A, dA) = _poly_in_s([p["a"], p["c"]])
        (B, dB) = _poly_in_s([p["b"], p["d"]])
        roots = [-p["a"] / p["c"]] if p["c"] != 0 else []
    elif model.id is ModelId.BAUTIN:
        (A, dA) = _poly_in_s([p["a"], p["c"], p["f"]])
        (B, dB) = _poly_in_s([p["b"], p["d"], p["g"]])
        roots = [float(z.real) for z in np.roots([p["f"], p["c"], p["a"]]) if abs(z.imag) < 1e-12]
    elif model.id is ModelId.LAMBDA_OMEGA:
        G, H = p["G"], p["H"]
        if callable(G):
            raise TypeError("callable lambda-omega terms go through lambda_omega_field")
        (A, dA), (B, dB) = _radial_from_polar_poly(G, H)
        a_coeffs = list(G)[1::2]
        roots = [float(z.real) for z in np.roots(a_coeffs[::-1]) if abs(z.imag) < 1e-12] if len(a_coeffs) > 1 else []
    else:
        raise ValueError(f"{model.id.value} is not a radial model")
    return _Radial(A, dA, B, dB, _stable_radius(A, dA, roots))


def _radial_field(rad: _Radial, name: str, params) -> VectorField:
    A, dA, B, dB = rad.A, rad.dA, rad.B, rad.dB

    def rhs(z):
        x, y = z[0], z[1]
        s = x * x + y * y
        a_, b_ = A(s), B(s)
        return np.array([a_ * x - b_ * y, b_ * x + a_ * y])

    def jac(z):
        x, y = z[0], z[1]
        s = x * x + y * y
        a_, b_, da, db = A(s), B(s), dA(s), dB(s)
        return np.array([
            [a_ + 2 * x * x * da - 2 * x * y * db, 2 * x * y * da - b_ - 2 * y * y * db],
            [b_ + 2 * x * x * db + 2 * x * y * da, a_ + 2 * y * y * da + 2 * x * y * db],
        ])

    def div(z):
        s = z[0] * z[0] + z[1] * z[1]
        return 2 * A(s) + 2 * s * dA(s)

    return VectorField(2, rhs, jac, div, dict(params), name)


def lambda_omega_field(G, H, dG, dH, r_po: float, name: str = "lambda_omega") -> VectorField:
    """Cartesian field for ``r' = G(r)``, ``phi' = H(r)`` from user callbacks.

    Smooth away from the origin; ``r_po`` is the stable orbit radius, used only
    for bookkeeping in ``params``.
    """

    def rhs(z):
        x, y = z[0], z[1]
        r = np.sqrt(x * x + y * y)
        a_, b_ = G(r) / r, H(r)
        return np.array([a_ * x - b_ * y, b_ * x + a_ * y])

    def jac(z):
        x, y = z[0], z[1]
        r = np.sqrt(x * x + y * y)
        a_, b_ = G(r) / r, H(r)
        da = (dG(r) / r - G(r) / r ** 2) / (2 * r)
        db = dH(r) / (2 * r)
        return np.array([
            [a_ + 2 * x * x * da - 2 * x * y * db, 2 * x * y * da - b_ - 2 * y * y * db],
            [b_ + 2 * x * x * db + 2 * x * y * da, a_ + 2 * y * y * da + 2 * x * y * db],
        ])

    def div(z):
        r = np.sqrt(z[0] * z[0] + z[1] * z[1])
        return G(r) / r + dG(r)

    return VectorField(2, rhs, jac, div, {"r_po": r_po}, name)


def _sniper_field(p) -> VectorField:
    rho, eta = p["rho"], p["eta"]

    def rhs(z):
        x, y = z[0], z[1]
        s = x * x + y * y
        r = np.sqrt(s)
        return np.array([(rho - s) * x - eta * y + y * y / r,
                         (rho - s) * y + eta * x - x * y / r])

    def jac(z):
        x, y = z[0], z[1]
        s = x * x + y * y
        r = np.sqrt(s)
        r3 = r * s
        return np.array([
            [rho - s - 2 * x * x - x * y * y / r3, -2 * x * y - eta + 2 * y / r - y ** 3 / r3],
            [-2 * x * y + eta - y / r + x * x * y / r3, rho - s - 2 * y * y - x / r + x * y * y / r3],
        ])

    def div(z):
        x, y = z[0], z[1]
        s = x * x + y * y
        return 2 * rho - 4 * s - x / np.sqrt(s)

    return VectorField(2, rhs, jac, div, dict(p), "sniper")


def _sandstede_field(p) -> VectorField:
    mu, a, b = p["mu"], p["a"], p["b"]
    q1 = a / 4 + 3 * b / 8
    q2 = -a / 4 + 3 * b / 8
    q3 = 3 * a / 8

    def rhs(z):
        x, y = z[0], z[1]
        s = (x + y) ** 2
        d = x * x - y * y
        return np.array([(a + b - 0.5 * mu) * x - 0.5 * mu * y - q1 * s - q3 * d,
                         0.5 * mu * x + (a - b + 0.5 * mu) * y + q2 * s + q3 * d])

    def jac(z):
        x, y = z[0], z[1]
        u = 2 * (x + y)
        return np.array([
            [a + b - 0.5 * mu - q1 * u - 2 * q3 * x, -0.5 * mu - q1 * u + 2 * q3 * y],
            [0.5 * mu + q2 * u + 2 * q3 * x, a - b + 0.5 * mu + q2 * u - 2 * q3 * y],
        ])

    def div(z):
        return 2 * a - 1.75 * a * (z[0] + z[1])

    return VectorField(2, rhs, jac, div, dict(p), "sandstede")


def _vdp_field(p) -> VectorField:
    mu = p["mu"]

    def rhs(z):
        x, y = z[0], z[1]
        return np.array([(-y + x - x ** 3 / 3) / mu, x])

    def jac(z):
        x = z[0]
        return np.array([[(1 - x * x) / mu, -1 / mu], [1.0 + 0 * x, 0.0 * x]])

    def div(z):
        return (1 - z[0] * z[0]) / mu

    fs = FastSlow(
        mu=mu,
        f=lambda z: -z[1] + z[0] - z[0] ** 3 / 3,
        g=lambda z: z[0],
        f_x=lambda z: 1 - z[0] * z[0],
        f_y=lambda z: -1.0,
        g_x=lambda z: 1.0,
        g_y=lambda z: 0.0,
    )
    return VectorField(2, rhs, jac, div, dict(p), "vdp", fs)


def _check_stability(model: Model) -> None:
    p = model.params
    mid = model.id
    if mid is ModelId.HOPF:
        if not (p["a"] > 0 and p["c"] < 0):
            raise ValueError("Hopf normal form needs a > 0 and c < 0 for a stable orbit")
    elif mid is ModelId.SNIPER:
        if not (p["eta"] > 1 and p["rho"] > 0):
            raise ValueError("SNIPER model needs eta > 1 and rho > 0")
    elif mid is ModelId.SANDSTEDE:
        if not (p["mu"] > 0 and p["a"] < 0 < p["b"] and abs(p["b"]) > abs(p["a"])):
            raise ValueError("homoclinic model needs mu > 0, a < 0 < b and |b| > |a|")
    elif mid is ModelId.VAN_DER_POL:
        if not (0 < p["mu"] < 1):
            raise ValueError("van der Pol model needs 0 < mu < 1")
    elif mid in (ModelId.BAUTIN, ModelId.LAMBDA_OMEGA):
        if not callable(p.get("G")):
            _radial_structure(model)


def model_field(model, **overrides) -> VectorField:
    """Runnable Cartesian field (with analytic Jacobian and divergence) for a model."""
    m = _as_model(model, overrides)
    if m.id in (ModelId.HOPF, ModelId.BAUTIN, ModelId.LAMBDA_OMEGA):
        rad = _radial_structure(m)
        return _radial_field(rad, m.id.value, m.params)
    if m.id is ModelId.SNIPER:
        return _sniper_field(m.params)
    if m.id is ModelId.SANDSTEDE:
        return _sandstede_field(m.params)
    return _vdp_field(m.params)


def default_guess(model) -> np.ndarray:
    """A starting point inside the basin of the stable orbit."""
    m = _as_model(model)
    if m.id in (ModelId.HOPF, ModelId.BAUTIN, ModelId.LAMBDA_OMEGA):
        r = _radial_structure(m).r_po
        return np.array([0.5 * r if m.id is not ModelId.BAUTIN else 1.1 * r, 0.0])
    if m.id is ModelId.SNIPER:
        return np.array([0.8 * math.sqrt(m["rho"]), 0.0])
    if m.id is ModelId.SANDSTEDE:
        return np.array([0.01, 0.02])
    return np.array([2.0, 0.0])


def integrator_defaults(model) -> IntegratorConfig:
    """Integrator settings that resolve each model's orbit to the tested accuracy."""
    m = _as_model(model)
    if m.id is ModelId.SANDSTEDE:
        return IntegratorConfig(rtol=1e-15, atol=1e-30, extended=True)
    if m.id is ModelId.VAN_DER_POL:
        return IntegratorConfig(rtol=1e-11, atol=1e-13)
    return IntegratorConfig(rtol=1e-12, atol=1e-14)


# --------------------------------------------------------------------------
# closed forms


@dataclass(frozen=True)
class AnalyticReduction:
    """Closed-form PRC, IRC and nontrivial Floquet exponent of a model.

    ``validity`` is ``"full-phase"``, ``"box-only"`` (homoclinic: valid while
    the orbit is inside the saddle box) or ``"spike-only"`` (relaxation limit:
    the IRC vanishes except at the phases in ``spikes``).
    """

    prc: Callable[[Any], np.ndarray]
    irc: Callable[[Any], np.ndarray]
    k: float
    validity: str
    omega: float
    spikes: tuple = ()
    extras: Mapping[str, Any] = field(default_factory=dict)


def _vec(cx, cy):
    return np.stack(np.broadcast_arrays(cx, cy), axis=-1)


def _radial_reduction(rad: _Radial) -> AnalyticReduction:
    r = rad.r_po
    dG, dH = rad.dG(r), rad.dH(r)
    ratio = dH / dG
    amp = math.sqrt(1 + r * r * ratio * ratio)

    def prc(th):
        th = np.asarray(th, dtype=float)
        return _vec(-ratio * np.cos(th) - np.sin(th) / r, -ratio * np.sin(th) + np.cos(th) / r)

    def irc(th):
        th = np.asarray(th, dtype=float)
        return _vec(-amp * np.cos(th), -amp * np.sin(th))

    return AnalyticReduction(prc, irc, float(dG), "full-phase", float(rad.H(r)),
                             extras={"r_po": r, "dG": float(dG), "dH": float(dH)})


def _hopf_reduction(p) -> AnalyticReduction:
    a, b, c, d = p["a"], p["b"], p["c"], p["d"]
    q = math.sqrt(-a * c)
    amp = math.sqrt(1 + d * d / (c * c))
    r = math.sqrt(-a / c)

    def prc(th):
        th = np.asarray(th, dtype=float)
        return _vec(d / q * np.cos(th) + c / q * np.sin(th), d / q * np.sin(th) - c / q * np.cos(th))

    def irc(th):
        th = np.asarray(th, dtype=float)
        return _vec(-amp * np.cos(th), -amp * np.sin(th))

    return AnalyticReduction(prc, irc, -2 * a, "full-phase", b + d * r * r, extras={"r_po": r})


def _bautin_reduction(p, rad: _Radial) -> AnalyticReduction:
    a, c, d, f, g = p["a"], p["c"], p["d"], p["f"], p["g"]
    r = rad.r_po
    num = 2 * d * r + 4 * g * r ** 3
    den = a + 3 * c * r ** 2 + 5 * f * r ** 4
    amp = math.sqrt(1 + r * r * (num / den) ** 2)

    def prc(th):
        th = np.asarray(th, dtype=float)
        return _vec(-num / den * np.cos(th) - np.sin(th) / r, -num / den * np.sin(th) + np.cos(th) / r)

    def irc(th):
        th = np.asarray(th, dtype=float)
        return _vec(-amp * np.cos(th), -amp * np.sin(th))

    omega = p["b"] + d * r ** 2 + g * r ** 4
    return AnalyticReduction(prc, irc, den, "full-phase", omega, extras={"r_po": r})


def _sniper_reduction(p) -> AnalyticReduction:
    rho, eta = p["rho"], p["eta"]
    w = math.sqrt(eta * eta - 1)

    def prc(th):
        th = np.asarray(th, dtype=float)
        return _vec((np.cos(th) + w * np.sin(th) - 1) / (math.sqrt(rho) * w),
                    (np.sin(th) - w * np.cos(th)) / (math.sqrt(rho) * eta))

    def irc(th):
        th = np.asarray(th, dtype=float)
        den = w * np.sin(th) + np.cos(th) - eta * eta
        return _vec((w * np.sin(th) - (eta * eta - 1) * np.cos(th)) / den,
                    eta * (1 - w * np.sin(th) - np.cos(th)) / den)

    return AnalyticReduction(prc, irc, -2 * rho, "full-phase", w)


def _saddle_eigenvalues(p) -> tuple[float, float]:
    J = _sandstede_field(p).jac(np.zeros(2))
    ev = np.sort(np.linalg.eigvals(J).real)
    return float(ev[0]), float(ev[1])


def _homoclinic_reduction(p, delta: float, eps: float | None, period: float | None,
                          irc_x0: float) -> AnalyticReduction:
    lam_s, lam_u = _saddle_eigenvalues(p)
    if eps is None and period is None:
        eps = p["mu"]
    if period is None:
        period = box_transit_time(delta, eps, lam_u)
    if eps is None:
        eps = box_entry_distance(delta, period, lam_u)
    omega = 2 * math.pi / period
    z_x0 = 2 * math.pi / (eps * math.log(delta / eps))
    z_y0 = 0.0

    def prc(th):
        th = np.asarray(th, dtype=float)
        return _vec(z_x0 * np.exp(-lam_u * th / omega), z_y0 * np.exp(-lam_s * th / omega))

    def irc(th):
        th = np.asarray(th, dtype=float)
        return _vec(irc_x0 * np.exp(lam_s * th / omega), np.exp(lam_u * th / omega))

    return AnalyticReduction(prc, irc, homoclinic_analytic_k(lam_s, lam_u), "box-only", omega,
                             extras={"lambda_s": lam_s, "lambda_u": lam_u, "delta": delta,
                                     "eps": eps, "period": period, "irc_x0": irc_x0})


def relaxation_limit_orbit():
    """Singular van der Pol cycle: period, branch time map and spike phases.

    Phase zero is the maximum-x point (x=2, y=-2/3), the start of the right
    slow branch.  Returns a dict with ``period``, ``omega``, ``a`` (period
    mean of f_x), ``x_of_theta`` and the two zeros of ``a - f_x``.
    """
    half = 1.5 - math.log(2.0)
    period = 2 * half
    omega = 2 * math.pi / period
    # mean of f_x = 1 - x^2 over a slow branch, dt = (1 - x^2)/x dx
    a = (-0.75 - math.log(2.0)) / half

    def t_right(x):
        return math.log(x / 2.0) - (x * x - 4.0) / 2.0

    def x_of_theta(th):
        th = float(th) % (2 * math.pi)
        sign = 1.0
        if th >= math.pi:
            th -= math.pi
            sign = -1.0
        t = th / omega
        if t <= 0:
            return 2.0 * sign
        if t >= half:
            return 1.0 * sign
        return sign * brentq(lambda x: t_right(x) - t, 1.0, 2.0, xtol=1e-15)

    x_star = math.sqrt(1.0 - a)
    th1 = omega * t_right(x_star)
    return {"period": period, "omega": omega, "a": a, "x_of_theta": x_of_theta,
            "theta_spikes": (th1, th1 + math.pi), "x_star": x_star}


def _relaxation_reduction() -> AnalyticReduction:
    lim = relaxation_limit_orbit()
    omega = lim["omega"]
    xs = np.vectorize(lim["x_of_theta"], otypes=[float])

    def prc(th):
        x = xs(np.asarray(th, dtype=float))
        # g = x, g_x = 1, f_x = 1 - x^2
        return _vec(-omega / ((1 - x * x) * x), omega / x)

    def irc(th):
        th = np.asarray(th, dtype=float)
        return _vec(np.zeros_like(th), np.zeros_like(th))

    def isochron_direction(th):
        x = xs(np.asarray(th, dtype=float))
        r = 1.0 / (1 - x * x)
        nrm = np.sqrt(1 + r * r)
        return _vec(-1.0 / nrm, -r / nrm)

    th1, th2 = lim["theta_spikes"]
    # odd symmetry (x, y) -> (-x, -y) makes the two spikes opposite in sign
    spikes = ((th1, 1.0), (th2, -1.0))
    return AnalyticReduction(prc, irc, -math.inf, "spike-only", omega, spikes,
                             extras={"a": lim["a"], "period": lim["period"],
                                     "isochron_direction": isochron_direction})


def analytic_reduction(model, *, delta: float = 0.0201, eps: float | None = None,
                       period: float | None = None, irc_x0: float = 1.0,
                       **overrides) -> AnalyticReduction:
    """Closed-form reduction of a catalog model.

    The homoclinic row needs the box size ``delta`` and either the re-entry
    distance ``eps`` or the orbit ``period`` (which fixes ``omega``); with
    neither, ``eps`` defaults to the bifurcation parameter.  ``irc_x0`` is the
    free amplitude of the IRC x-component inside the box.
    """
    m = _as_model(model, overrides)
    if m.id is ModelId.HOPF:
        return _hopf_reduction(m.params)
    if m.id is ModelId.BAUTIN:
        return _bautin_reduction(m.params, _radial_structure(m))
    if m.id is ModelId.LAMBDA_OMEGA:
        return _radial_reduction(_radial_structure(m))
    if m.id is ModelId.SNIPER:
        return _sniper_reduction(m.params)
    if m.id is ModelId.SANDSTEDE:
        return _homoclinic_reduction(m.params, delta, eps, period, irc_x0)
    return _relaxation_reduction()


def homoclinic_analytic_k(lambda_s: float, lambda_u: float) -> float:
    """Limit of the nontrivial Floquet exponent at the homoclinic bifurcation."""
    if not (lambda_u > 0 and lambda_s < 0):
        raise ValueError("need lambda_u > 0 > lambda_s")
    if not abs(lambda_s) > lambda_u:
        raise ValueError("orbit is not stable: |lambda_s| must exceed lambda_u")
    k = lambda_s + lambda_u
    if abs(k) < 1e-3 * abs(lambda_s):
        warnings.warn(f"weakly stable orbit: k = {k:.3g}", stacklevel=2)
    return k


def box_transit_time(delta: float, eps: float, lambda_u: float) -> float:
    """Time to cross the saddle box ``[0, delta]^2`` entering at distance ``eps``."""
    if not (0 < eps < delta):
        raise ValueError("need 0 < eps < delta")
    if not lambda_u > 0:
        raise ValueError("need lambda_u > 0")
    return math.log(delta / eps) / lambda_u


def box_entry_distance(delta: float, tau: float, lambda_u: float) -> float:
    """Inverse of :func:`box_transit_time`: entry distance giving transit time ``tau``."""
    if not (delta > 0 and tau > 0 and lambda_u > 0):
        raise ValueError("need delta, tau, lambda_u > 0")
    return delta * math.exp(-lambda_u * tau)
