import math

import numpy as np
import pytest

from augphase.floquet import (FloquetError, floquet_divergence, floquet_normal_stretching,
                              isochron_direction, monodromy_poincare, orbit_mean,
                              relaxation_exponent_decomposition)
from augphase.models import analytic_reduction, default_guess, integrator_defaults, make_model, model_field
from augphase.orbit import find_periodic_orbit


def test_hopf_exponent_and_multiplier(hopf_red):
    fl = hopf_red.floquet
    assert abs(fl.k + 2) < 1e-6
    assert abs(fl.lam - math.exp(-4 * math.pi)) < 1e-6 * math.exp(-4 * math.pi) + 1e-9
    assert np.allclose(fl.v, [1.0, 0.0], atol=1e-6)
    assert abs(hopf_red.k_normal + 2) < 1e-8


def test_isochron_direction_sign():
    assert np.allclose(isochron_direction([0.0, 1.0]), [1.0, 0.0])
    assert np.allclose(isochron_direction([0.0, -1.0]), [1.0, 0.0])
    u = isochron_direction([3.0, 4.0])
    assert abs(np.linalg.norm(u) - 1) < 1e-15 and abs(u @ [3.0, 4.0]) < 1e-15 and u[0] > 0
    with pytest.raises(ValueError):
        isochron_direction([1.0, 0.0, 0.0])


def test_orbit_mean_constant(hopf_red):
    m, _, _ = orbit_mean(lambda z: 3.0 + 0 * np.asarray(z)[0], hopf_red.orbit)
    assert abs(m - 3.0) < 1e-12


@pytest.mark.parametrize("fix", ["hopf_red", "hopf_d1_red", "sniper_red", "bautin_red", "lo_red"])
def test_exponent_matches_closed_form(fix, request):
    red = request.getfixturevalue(fix)
    ar = analytic_reduction(red.model)
    k_div = red.floquet.extras["k_divergence"]
    assert abs(k_div - ar.k) < 1e-8 * max(1.0, abs(ar.k))
    assert abs(red.floquet.k - ar.k) < 1e-6 * max(1.0, abs(ar.k))
    assert abs(red.k_normal - ar.k) < 1e-8 * max(1.0, abs(ar.k))


@pytest.mark.parametrize("fix", ["hopf_red", "sniper_red", "vdp01_red"])
def test_methods_agree(fix, request):
    red = request.getfixturevalue(fix)
    fl = red.floquet
    if not fl.underflow:
        # multiplier consistency with the divergence exponent
        assert abs(fl.lam / math.exp(fl.extras["k_divergence"] * red.orbit.period) - 1) < 1e-6
    k_div = fl.extras["k_divergence"]
    assert abs(red.k_normal - k_div) < 1e-7 * max(1.0, abs(k_div))


@pytest.mark.parametrize("fix", ["hopf_d1_red", "sniper_red"])
def test_section_normal_invariance(fix, request):
    red = request.getfixturevalue(fix)
    f, o = red.field, red.orbit
    base = monodromy_poincare(f, o, red.prc(0.0))
    assert base.method == "monodromy"
    F0 = np.asarray(f(o.anchor))
    c, s_ = math.cos(0.6), math.sin(0.6)
    tilted = np.array([c * F0[0] - s_ * F0[1], s_ * F0[0] + c * F0[1]])
    for nvec in (F0, tilted):
        alt = monodromy_poincare(f, o, red.prc(0.0), section_normal=nvec)
        assert alt.extras["section"] == "given"
        assert abs(alt.lam / base.lam - 1) < 0.01


def test_prc_contraction_tracks_multiplier(vdp01_red):
    c = vdp01_red.prc.extras.get("contraction")
    assert c is not None and len(c) > 0
    lam = vdp01_red.floquet.lam
    assert abs(c[0] - lam) < 0.05 * lam + 1e-12


def test_relaxation_decomposition(vdp01_red):
    a, b = relaxation_exponent_decomposition(vdp01_red.field, vdp01_red.orbit)
    mu = vdp01_red.model["mu"]
    assert b == 0.0
    assert a < 0
    assert abs(a / mu + b - vdp01_red.floquet.k) < 1e-7 * abs(vdp01_red.floquet.k)


def test_relaxation_decomposition_needs_fast_slow(hopf_red):
    with pytest.raises(ValueError):
        relaxation_exponent_decomposition(hopf_red.field, hopf_red.orbit)


def test_normal_stretching_planar_only(hopf_red):
    assert abs(floquet_normal_stretching(hopf_red.field, hopf_red.orbit) + 2) < 1e-9
    assert abs(floquet_divergence(hopf_red.field, hopf_red.orbit) + 2) < 1e-9


@pytest.mark.slow
def test_sandstede_exponent(sand_red):
    fl = sand_red.floquet
    assert abs(fl.k + 1.7581) < 0.02
    assert fl.underflow  # e^{kT} ~ 5e-25 is far below the return-map resolution
    assert abs(sand_red.k_normal - fl.k) < 1e-4 * abs(fl.k)
    assert abs(abs(fl.v[1]) - 1) < 1e-3 and abs(fl.v[0]) < 0.05


@pytest.mark.slow
def test_sandstede_homoclinic_trend():
    ks = []
    for mu in (1e-7, 1e-10, 1e-13):
        m = make_model("sandstede", mu=mu)
        f = model_field(m)
        ks.append(floquet_divergence(f, find_periodic_orbit(f, default_guess(m), integrator_defaults(m))))
    # k approaches lambda_s + lambda_u = -2 from above as the orbit nears the homoclinic loop
    assert ks[0] > ks[1] > ks[2] > -2
