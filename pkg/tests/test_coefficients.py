import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dunehom.coefficients import (ACTIVE, DEGENERATE, PRESETS, THRESHOLD, TransportLaw, assemble_AC,
                                  assemble_arrays, classify_theta, eval_transport, get_preset, limit_AC,
                                  smooth_step, validate_hypotheses)
from dunehom.fields import Grid

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_transport_law_values():
    law = TransportLaw(g0=0.1, g1=1.0, g2=0.6)
    assert eval_transport(law, 0.0) == (0.1, 0.0)
    ga, gc = eval_transport(law, 1.0)
    assert ga == pytest.approx(0.6) and gc == pytest.approx(0.3)
    ga_arr, gc_arr = eval_transport(law, np.array([0.0, 1.0]))
    assert np.allclose(ga_arr, [0.1, 0.6]) and np.allclose(gc_arr, [0.0, 0.3])


def test_transport_law_rejects_negative_speed():
    with pytest.raises(ValueError, match="u >= 0"):
        eval_transport(TransportLaw(), -0.1)


def test_threshold_mobility():
    law = TransportLaw(g0=0.05, g1=1.0, U_thr=0.2)
    assert law.G_thr == pytest.approx(0.05 + 0.04 / 1.04)


def test_smooth_step_limits():
    s = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert s[0] == 0 and s[1] == 0 and s[3] == 1 and s[4] == 1
    assert s[2] == pytest.approx(0.5)


@pytest.mark.parametrize("name", sorted(PRESETS))
@pytest.mark.parametrize("eps", [0.2, 0.05])
def test_bundled_presets_pass_hypotheses(name, eps):
    rep = validate_hypotheses(get_preset(name), eps)
    assert rep.violations == []
    assert rep.gamma > 0 and rep.Gtilde_thr > 0
    assert rep.theta_window is not None


def test_violation_reported_when_g_c_exceeds_g_a():
    rep = validate_hypotheses(get_preset("tidal-long", g0=0.0, g1=0.5, g2=1.0), 0.1)
    assert any(v[0] == "transport:g_a>=g_c" for v in rep.violations)
    assert not rep.passed


def test_vacuous_threshold_gives_full_window():
    preset = get_preset("steady-mean")
    eps = 0.1
    rep = validate_hypotheses(preset, eps)
    assert rep.theta_window == (0.0, 1.0)
    s = np.linspace(0, 1, 33)
    t, tau, th, x1, x2 = np.meshgrid(s, s, s, s[:8], s[:8], indexing="ij")
    max_m = float(np.max(preset.height(t, tau, th, x1, x2, eps)))
    law = preset.transport
    bound = preset.a * law.g0 * (1 - abs(preset.b) * np.sqrt(eps) * max_m)
    assert bound > 0
    assert rep.Gtilde_thr >= bound * (1 - 1e-9)


def test_hypothesis_report_csv(tmp_path):
    rep = validate_hypotheses(get_preset("tidal-long"), 0.1)
    path = tmp_path / "h.csv"
    rep.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["record", "key", "sample_point", "value"]
    consts = {r[1]: float(r[3]) for r in rows if r[0] == "constant"}
    assert consts["gamma"] == rep.gamma and consts["Gtilde_thr"] == rep.Gtilde_thr
    assert not any(r[0] == "violation" for r in rows)


def test_classify_theta_labels():
    gapped = get_preset("gapped-long")
    assert classify_theta(gapped, 0.3, 0.75, 0.1) == DEGENERATE
    assert classify_theta(gapped, 0.3, 0.2, 0.1) == ACTIVE
    tidal = get_preset("tidal-long")
    assert abs(tidal.carrier_speed(0.3)) < tidal.transport.U_thr
    assert classify_theta(tidal, 0.3, 0.3, 0.1) == THRESHOLD
    assert classify_theta(tidal, 0.3, 0.0, 0.0) == ACTIVE


def test_classify_theta_needs_long_regime():
    with pytest.raises(ValueError):
        classify_theta(get_preset("steady-mean"), 0.0, 0.0, 0.1)


def test_presets_are_immutable_and_overrides_checked():
    p = get_preset("tidal-long")
    with pytest.raises(Exception):
        p.a = 2.0
    assert get_preset("tidal-long", a=2.0, U_thr=0.3).transport.U_thr == 0.3
    with pytest.raises(KeyError):
        get_preset("tidal-long", not_a_key=1.0)
    with pytest.raises(KeyError):
        get_preset("no-such-preset")


def test_assemble_rejects_sign_flip_and_bad_eps():
    g = Grid(8)
    with pytest.raises(ValueError, match="1 - b"):
        assemble_AC(get_preset("tidal-mean", b=20.0), 0.0, 0.0, 0.0, 0.2, g)
    with pytest.raises(ValueError):
        assemble_AC(get_preset("tidal-mean"), 0.0, 0.0, 0.0, 0.0, g)


@given(unit, unit, unit, st.floats(0.01, 0.2), st.sampled_from(sorted(PRESETS)))
def test_diffusion_never_negative(t, tau, theta, eps, name):
    g = Grid(8)
    A, _ = assemble_AC(get_preset(name), t, tau, theta, eps, g)
    assert A.values.min() >= 0.0


@given(unit, unit, unit, st.sampled_from(sorted(PRESETS)))
def test_coefficients_periodic_in_fast_variables(t, tau, theta, name):
    x = np.linspace(0, 1, 8, endpoint=False)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    p = get_preset(name)
    base = assemble_arrays(p, t, tau, theta, 0.1, x1, x2)
    for shifted in (assemble_arrays(p, t, tau, theta + 1.0, 0.1, x1, x2),
                    assemble_arrays(p, t, tau + 1.0, theta, 0.1, x1, x2)):
        for a, b in zip(base, shifted):
            assert np.allclose(a, b, atol=1e-12)


@given(unit, st.sampled_from(["tidal-long", "tidal-mean", "tidal-short"]))
def test_masked_velocity_frozen_below_threshold(theta, name):
    p = get_preset(name)
    if abs(p.carrier_speed(theta)) > p.transport.U_thr:
        return
    x = np.linspace(0, 1, 8, endpoint=False)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    u1, u2 = p.velocity(0.37, 0.2, theta, x1, x2, 0.1)
    assert np.ptp(u1) == 0 and np.ptp(u2) == 0


@pytest.mark.parametrize("name, t, theta", [("tidal-long", 0.3, 0.05), ("tidal-long", 0.7, 0.9),
                                            ("tidal-mean", 0.3, 0.1), ("steady-mean", 0.5, 0.6)])
def test_first_order_terms_match_expansion(name, t, theta):
    """The assembled coefficients equal limit + s * first order + O(s^2)."""
    g = Grid(16)
    p = get_preset(name)
    At, Ct, A1, C1 = limit_AC(p, t, 0.25, theta, g)
    for eps in (1e-2, 1e-3, 1e-4):
        s = p.small_parameter(eps)
        A, C = assemble_AC(p, t, 0.25, theta, eps, g)
        assert np.max(np.abs(A.values - At.values - s * A1.values)) <= 1.0 * s**2
        assert np.max(np.abs(C.c1.values - Ct.c1.values - s * C1.c1.values)) <= 1.0 * s**2
        assert np.max(np.abs(C.c2.values - Ct.c2.values - s * C1.c2.values)) <= 1.0 * s**2


def test_long_heights_vanish_with_velocity():
    p = get_preset("gapped-long")
    x = np.linspace(0, 1, 8, endpoint=False)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    u1, u2 = p.velocity(0.2, 0.0, 0.75, x1, x2, 0.1)
    m = p.height(0.2, 0.0, 0.75, x1, x2, 0.1)
    assert np.all(u1 == 0) and np.all(u2 == 0) and np.all(m == 0)
