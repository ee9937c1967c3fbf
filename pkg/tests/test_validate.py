import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from augphase.adjoint import ResponseCurve
from augphase.models import analytic_reduction, default_guess, integrator_defaults, make_model, model_field
from augphase.orbit import find_periodic_orbit
from augphase.validate import (DEFAULT_BOX_DELTA, SPIKE_TARGETS, ValidationError, align_curves,
                               anchor_at_box_entry, best_common_shift, box_time_fraction,
                               catalog_crossvalidation, homoclinic_box_analysis, invariant_suite,
                               relaxation_spike_analysis)

TWO_PI = 2 * math.pi


@pytest.mark.parametrize("fix", ["hopf_red", "hopf_d1_red", "sniper_red", "lo_red"])
def test_catalog_rows(fix, request):
    rep = catalog_crossvalidation(None, red=request.getfixturevalue(fix))
    assert rep.passed(), rep
    assert rep.prc_err < 1e-3 and rep.irc_err < 1e-3 and rep.k_err < 1e-6


def test_catalog_bautin_exponent(bautin_red):
    rep = catalog_crossvalidation(None, red=bautin_red)
    assert abs(rep.k_num - (-2 - 2 * math.sqrt(2))) < 1e-6 * (2 + 2 * math.sqrt(2))
    assert rep.passed()


def test_catalog_sniper_shift(sniper_red):
    # positive-x anchor sits a quarter turn before the closed form's phase origin
    rep = catalog_crossvalidation(None, red=sniper_red)
    assert abs(((rep.shift - 1.5 * math.pi) + math.pi) % TWO_PI - math.pi) < 1e-3


def test_catalog_rejects_non_full_phase():
    with pytest.raises(ValueError):
        catalog_crossvalidation("vdp")


def test_align_recovers_shift_and_sign():
    th = TWO_PI * np.arange(400) / 400
    ana = analytic_reduction("hopf")
    shifted = ResponseCurve("IRC", th, -ana.irc(th + 1.234), {})
    s, sign, err = align_curves(shifted, ana.irc, allow_sign=True)
    # (s, -1) and (s + pi, +1) are equivalent for this curve; check the reconstruction
    assert err < 1e-8
    assert np.max(np.abs(sign * shifted(th + s) - ana.irc(th))) < 1e-8
    s2, sign2, err2 = align_curves(shifted, ana.irc)
    assert sign2 == 1.0 and err2 < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_best_common_shift(offset):
    ph = np.mod(np.array(SPIKE_TARGETS) + offset, TWO_PI)
    s, res = best_common_shift(ph, SPIKE_TARGETS)
    assert res < 1e-9


@pytest.mark.parametrize("fix", ["hopf_red", "sniper_red", "bautin_red", "lo_red", "vdp01_red"])
def test_invariant_suite(fix, request):
    rep = invariant_suite(request.getfixturevalue(fix))
    assert rep.zf_err < 1e-6 and rep.zf_bad_fraction == 0.0
    assert rep.if_err < 1e-6
    assert rep.lam_err < 1e-6
    assert rep.prc_closure < 1e-6 and rep.irc_closure < 1e-6


def test_box_analysis_requires_entry_anchor(hopf_red):
    with pytest.raises(ValueError):
        homoclinic_box_analysis(hopf_red.field, hopf_red.orbit, hopf_red.irc)


def test_box_entry_anchor_missing(hopf_red):
    with pytest.raises(Exception):
        anchor_at_box_entry(hopf_red.orbit, 5.0)


@pytest.mark.slow
def test_box_entry_anchor(sand_red):
    o = sand_red.orbit
    assert abs(o.anchor[1] - DEFAULT_BOX_DELTA) < 1e-12
    F = np.asarray(sand_red.field(o.anchor))
    assert F[1] < 0


@pytest.mark.slow
def test_box_irc_returns_to_start(sand_red):
    rep = homoclinic_box_analysis(sand_red.field, sand_red.orbit, sand_red.irc)
    assert rep.return_mismatch < 0.05
    assert 0 < rep.fraction <= 1 and rep.fraction <= rep.strip_fraction
    assert rep.lambda_u == pytest.approx(1.0, abs=1e-6) and rep.lambda_s == pytest.approx(-3.0, abs=1e-6)


@pytest.mark.slow
def test_box_fraction_increases_toward_homoclinic():
    fr = []
    for mu in (1e-7, 1e-10, 1e-13):
        m = make_model("sandstede", mu=mu)
        o = find_periodic_orbit(model_field(m), default_guess(m), integrator_defaults(m))
        fr.append(box_time_fraction(o, DEFAULT_BOX_DELTA)[0])
    assert fr[0] < fr[1] < fr[2]


def test_box_never_entered(hopf_red):
    with pytest.raises(ValidationError):
        box_time_fraction(hopf_red.orbit, 1e-3, 2000)


@pytest.mark.slow
def test_spike_structure(vdp_sweep):
    rep = vdp_sweep
    assert rep.mus == [0.1, 0.01, 0.001]
    for r in rep.records:
        assert r.crossings.size % 2 == 0 and r.a < 0
    last = rep.records[-1]
    th1, th2 = last.spike_phases
    assert abs(th2 - th1 - math.pi) < 0.02
    assert rep.monotone()
    assert last.mass_fraction > 0.9


def test_spike_mu_order_checked():
    with pytest.raises(ValueError):
        relaxation_spike_analysis((0.01, 0.1))
