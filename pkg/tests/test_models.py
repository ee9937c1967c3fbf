import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from augphase.models import (ModelId, analytic_reduction, box_entry_distance, box_transit_time,
                             homoclinic_analytic_k, lambda_omega_field, make_model, model_field,
                             relaxation_limit_orbit)

TWO_PI = 2 * math.pi


def test_hopf_tangent_on_orbit():
    f = model_field(make_model("hopf"))
    assert np.allclose(f([1.0, 0.0]), [0.0, 1.0], atol=1e-15)


def test_sandstede_origin():
    f = model_field(make_model("sandstede", mu=1e-13))
    assert np.allclose(f(np.zeros(2)), 0.0)
    assert np.max(np.abs(f.jac(np.zeros(2)) - np.diag([1.0, -3.0]))) < 1e-6


def test_vdp_nullcline_point():
    # the right-branch point of the cubic nullcline is (2, -2/3)
    f = model_field(make_model("vdp", mu=0.1))
    d = f([2.0, -2.0 / 3.0])
    assert abs(d[0]) < 1e-14 and d[1] == 2.0


@pytest.mark.parametrize("mid, kw", [
    ("hopf", dict(a=-1.0)), ("hopf", dict(c=1.0)), ("sniper", dict(eta=0.5)), ("sniper", dict(rho=-1.0)),
    ("sandstede", dict(mu=-1.0)), ("sandstede", dict(a=-3.0)), ("vdp", dict(mu=0.0)),
    ("bautin", dict(f=1.0, c=1.0, a=1.0)),
])
def test_stability_preconditions(mid, kw):
    with pytest.raises(ValueError):
        make_model(mid, **kw)


def test_unknown_parameter_rejected():
    with pytest.raises(ValueError, match="unknown"):
        make_model("hopf", zz=1.0)


def test_hopf_row():
    ar = analytic_reduction("hopf")
    th = np.linspace(0, TWO_PI, 17)
    assert np.allclose(ar.prc(th), np.c_[-np.sin(th), np.cos(th)], atol=1e-15)
    assert np.allclose(ar.irc(th), np.c_[-np.cos(th), -np.sin(th)], atol=1e-15)
    assert ar.k == -2.0 and ar.validity == "full-phase"


def test_hopf_d1_row():
    ar = analytic_reduction("hopf", d=1.0)
    assert np.allclose(ar.prc(0.0), [1.0, 1.0])
    assert np.allclose(ar.irc(0.0), [-math.sqrt(2), 0.0])


def test_sniper_row():
    ar = analytic_reduction("sniper")
    assert np.allclose(ar.prc(0.0), [0.0, -1 / math.sqrt(2)], atol=1e-15)
    assert np.allclose(ar.irc(0.0), [1.0, 0.0], atol=1e-15)
    assert ar.k == -2.0


def test_bautin_row_exact():
    ar = analytic_reduction("bautin")
    assert abs(ar.extras["r_po"] ** 2 - (2 + math.sqrt(2)) / 2) < 1e-12
    assert abs(ar.k - (-2 - 2 * math.sqrt(2))) < 1e-12


def test_lambda_omega_reproduces_hopf():
    lo = analytic_reduction("lambda_omega")  # G = r - r^3, H = 1
    hp = analytic_reduction("hopf")
    th = np.linspace(0, TWO_PI, 33)
    assert np.allclose(lo.prc(th), hp.prc(th), atol=1e-15)
    assert np.allclose(lo.irc(th), hp.irc(th), atol=1e-15)
    assert lo.k == hp.k and lo.omega == hp.omega


@pytest.mark.parametrize("mid", ["hopf", "bautin", "sniper", "lambda_omega"])
def test_full_phase_rows_periodic(mid):
    ar = analytic_reduction(mid)
    for fn in (ar.prc, ar.irc):
        assert np.max(np.abs(fn(TWO_PI) - fn(0.0))) < 1e-12


@pytest.mark.parametrize("mid", ["hopf", "bautin", "sniper", "lambda_omega"])
def test_closed_form_identities(mid):
    """Z.F = omega and I.F = 0 on the closed-form orbit."""
    m = make_model(mid)
    ar = analytic_reduction(m)
    f = model_field(m)
    th = np.linspace(0, TWO_PI, 64, endpoint=False)
    if mid == "sniper":
        # phase of the SNIPER row is not the polar angle; recover points from phi(theta)
        w = ar.omega
        eta = m["eta"]
        phi = 2 * np.arctan((1 + w * np.tan(th / 2)) / eta)
        pts = np.sqrt(m["rho"]) * np.c_[np.cos(phi), np.sin(phi)]
    else:
        r = ar.extras["r_po"]
        pts = r * np.c_[np.cos(th), np.sin(th)]
    F = np.array([f(p) for p in pts])
    if mid != "sniper":
        assert np.allclose(np.sum(ar.prc(th) * F, axis=1), ar.omega, rtol=1e-12)
        assert np.max(np.abs(np.sum(ar.irc(th) * F, axis=1))) < 1e-12
    else:
        # the SNIPER closed form is quoted in its own phase origin; check up to a shift
        zf = [np.max(np.abs(np.sum(ar.prc(th + s) * F, axis=1) - ar.omega)) for s in (0.0, math.pi)]
        assert min(zf) < 1e-12


def test_lambda_omega_callbacks():
    f = lambda_omega_field(lambda r: r - r ** 3, lambda r: 1.0 + 0 * r, lambda r: 1 - 3 * r ** 2,
                           lambda r: 0 * r, 1.0)
    g = model_field(make_model("hopf"))
    for x in ([0.3, 0.7], [1.2, -0.4]):
        assert np.allclose(f(x), g(x), atol=1e-14)
        assert np.allclose(f.jac(x), g.jac(x), atol=1e-12)


def test_lambda_omega_polynomial_validation():
    with pytest.raises(ValueError):
        make_model("lambda_omega", G=(1.0, 1.0, 0.0, -1.0))  # even power in G


def test_homoclinic_k():
    assert homoclinic_analytic_k(-3, 1) == -2
    assert homoclinic_analytic_k(-2, 1) == -1
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert abs(homoclinic_analytic_k(-1.0001, 1) + 0.0001) < 1e-12
        assert w, "weakly stable regime should be flagged"
    for bad in ((-1, 2), (1, 1), (-3, -1)):
        with pytest.raises(ValueError):
            homoclinic_analytic_k(*bad)


def test_box_transit_time():
    assert abs(box_transit_time(0.02, 0.02 / math.e, 1.0) - 1.0) < 1e-14
    assert abs(box_transit_time(0.02, 2e-8, 1.0) - math.log(1e6)) < 1e-12
    tau = 0.865 * 31.7689
    eps = box_entry_distance(0.0201, tau, 1.0)
    assert 2.0e-14 < eps < 2.6e-14
    assert abs(box_transit_time(0.0201, eps, 1.0) - tau) < 1e-9
    for bad in ((0.02, 0.03, 1.0), (0.02, 0.0, 1.0), (0.02, 0.01, -1.0)):
        with pytest.raises(ValueError):
            box_transit_time(*bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(1e-6, 0.999), st.floats(0.1, 5.0))
def test_box_transit_round_trip(delta, frac, lam_u):
    eps = delta * frac
    tau = box_transit_time(delta, eps, lam_u)
    assert math.isclose(box_entry_distance(delta, tau, lam_u), eps, rel_tol=1e-9)


def test_homoclinic_row_monotone():
    ar = analytic_reduction("sandstede", period=31.7689)
    assert ar.validity == "box-only"
    th = np.linspace(0, 5, 50)
    I = ar.irc(th)
    assert np.all(np.diff(I[:, 1]) > 0)
    assert np.all(np.diff(np.abs(I[:, 0])) < 0)
    assert ar.k == -2
    assert np.allclose(ar.irc(0.0), [1.0, 1.0])
    assert np.allclose(analytic_reduction("sandstede", irc_x0=0.3).irc(0.0), [0.3, 1.0])


def test_relaxation_row():
    lim = relaxation_limit_orbit()
    assert abs(lim["period"] - (3 - 2 * math.log(2))) < 1e-15
    th1, th2 = lim["theta_spikes"]
    assert abs(th2 - th1 - math.pi) < 1e-14
    ar = analytic_reduction("vdp")
    assert ar.validity == "spike-only" and len(ar.spikes) == 2
    assert np.all(ar.irc(np.linspace(0, 6, 7)) == 0)
    # y-component of the closed form: Z_y * y' = omega on the slow branches, where y' = x
    th = np.array([0.3, 1.0, 2.5])
    xs = np.array([lim["x_of_theta"](t) for t in th])
    assert np.allclose(ar.prc(th)[:, 1] * xs, ar.omega)


def test_model_ids():
    assert {m.value for m in ModelId} == {"lambda_omega", "hopf", "bautin", "sniper", "sandstede", "vdp"}
