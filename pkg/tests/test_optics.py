import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from procrustean.errors import SingularConfigurationError
from procrustean.optics import (BeamParam, LensConfig, OpticsModel, Space, ThinLens, acceptance_mode_at_crystal,
                                coupling_from_acceptance, coupling_vector, lg_overlap, lg_overlap_closed_form,
                                matched_geometry, propagate, waist_mismatch_overlap)

LAM = 702e-9
WS = 100e-6


def _abcd_oracle(q, elements):
    m = np.eye(2)
    for e in elements:
        m = np.array(e.matrix) @ m
    (a, b), (c, d) = m
    return (a * q + b) / (c * q + d)


def _field_overlap(src, acc, l):
    """Normalized LG_0l fields built from spot size and curvature, integrated
    numerically on a fixed radial grid."""
    k = 2 * math.pi / LAM

    def field(beam, r):
        w = beam.spot_size
        return (r * math.sqrt(2) / w) ** l * np.exp(-r * r / w ** 2 - 0.5j * k * beam.curvature * r * r)

    rmax = 10 * math.sqrt(l + 1) * max(src.spot_size, acc.spot_size)
    r = np.linspace(0, rmax, 200001)
    es, ea = field(src, r), field(acc, r)
    ns = integrate.simpson(np.abs(es) ** 2 * r, x=r)
    na = integrate.simpson(np.abs(ea) ** 2 * r, x=r)
    cross = integrate.simpson(np.conj(ea) * es * r, x=r)
    return abs(cross) ** 2 / (ns * na)


def test_zero_distance_is_identity():
    b = BeamParam(LAM, 50e-6, 0.03)
    out = propagate(b, [Space(0.0)])
    assert out.waist == pytest.approx(b.waist, rel=1e-14)
    assert out.waist_position == pytest.approx(b.waist_position, rel=1e-14)


def test_successive_spaces_compose():
    b = BeamParam(LAM, 40e-6, -0.01)
    two = propagate(b, [Space(0.12), Space(0.31)])
    one = propagate(b, [Space(0.43)])
    assert two.q == pytest.approx(one.q, rel=1e-13)


@given(st.floats(5e-6, 1e-3), st.floats(-0.5, 0.5), st.floats(0, 0.5), st.floats(0.005, 0.5), st.floats(0, 0.5))
def test_propagation_matches_matrix_product(w0, pos, d1, f, d2):
    b = BeamParam(LAM, w0, pos)
    elements = [Space(d1), ThinLens(f), Space(d2)]
    expected = _abcd_oracle(b.q, elements)
    assert propagate(b, elements).q == pytest.approx(expected, rel=1e-9, abs=1e-15)


def test_front_focal_waist_is_collimated():
    f, w0 = 0.05, 20e-6
    out = propagate(BeamParam(LAM, w0, 0.0), [Space(f), ThinLens(f), Space(f)])
    assert out.waist == pytest.approx(f * LAM / (math.pi * w0), rel=1e-12)
    assert out.waist_position == pytest.approx(0.0, abs=1e-12)


def test_singular_parameters():
    with pytest.raises(SingularConfigurationError):
        BeamParam.from_q(complex(0.1, 0.0), LAM)
    with pytest.raises(ValueError):
        ThinLens(0.0)
    with pytest.raises(ValueError):
        Space(-1.0)
    with pytest.raises(ValueError):
        BeamParam(LAM, 0.0)


def test_unit_magnification_imaging():
    f, wf = 0.01, 2.3e-6
    acc = acceptance_mode_at_crystal(LensConfig(f, 2 * f, 2 * f, wf), LAM)
    assert acc.spot_size == pytest.approx(wf, rel=1e-4)
    assert abs(acc.waist_position) < 1e-4 * f


def test_collimating_acceptance():
    f, wf = 0.01, 2.3e-6
    expected = f * LAM / (math.pi * wf)
    sizes = [acceptance_mode_at_crystal(LensConfig(f, z, f, wf), LAM).spot_size for z in (0.01, 0.05, 0.2)]
    assert sizes[0] == pytest.approx(expected, rel=1e-6)
    assert max(sizes) / min(sizes) < 1.01


def test_acceptance_is_lipschitz_near_imaging():
    model = OpticsModel()
    z0 = model.matched_position
    zs = z0 + np.linspace(-5e-4, 5e-4, 2001)
    a = np.array([acceptance_mode_at_crystal(model.config_at(z), LAM).spot_size for z in zs])
    slopes = np.abs(np.diff(a)) / np.diff(zs)
    # the step-to-step slope varies smoothly: no jumps beyond twice the neighbouring slope
    assert np.all(np.abs(np.diff(slopes)) <= 0.05 * slopes.max())


@pytest.mark.parametrize("fn", [lg_overlap_closed_form, lg_overlap])
def test_waist_mismatch_examples(fn):
    a, b = BeamParam(LAM, 30e-6), BeamParam(LAM, 60e-6)
    assert fn(a, b, 0) == pytest.approx(0.64, abs=1e-10)
    assert fn(a, b, 1) == pytest.approx(0.4096, abs=1e-10)
    assert waist_mismatch_overlap(1.0, 2.0, 0) == pytest.approx(0.64)
    for l in range(3):
        assert fn(a, a, l) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(10e-6, 500e-6), st.floats(10e-6, 500e-6), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
       st.integers(0, 2))
def test_quadrature_matches_closed_form(w1, w2, p1, p2, l):
    s, a = BeamParam(LAM, w1, p1), BeamParam(LAM, w2, p2)
    closed = lg_overlap_closed_form(s, a, l)
    assert lg_overlap(s, a, l) == pytest.approx(closed, abs=1e-8)
    assert 0.0 <= closed <= 1.0


@pytest.mark.parametrize("l", [0, 1, 2])
def test_closed_form_matches_explicit_fields(l):
    s = BeamParam(LAM, 80e-6, 0.02)
    a = BeamParam(LAM, 120e-6, -0.05)
    assert lg_overlap_closed_form(s, a, l) == pytest.approx(_field_overlap(s, a, l), abs=1e-8)


@settings(max_examples=40)
@given(st.floats(10e-6, 500e-6), st.floats(10e-6, 500e-6), st.integers(0, 3))
def test_pure_waist_mismatch_formula(w1, w2, l):
    closed = lg_overlap_closed_form(BeamParam(LAM, w1), BeamParam(LAM, w2), l)
    assert lg_overlap(BeamParam(LAM, w1), BeamParam(LAM, w2), l) == pytest.approx(closed, abs=1e-8)
    assert closed == pytest.approx(waist_mismatch_overlap(w1, w2, l), abs=1e-12)


def test_coupling_matched_to_first_order_mode():
    eta = coupling_from_acceptance(BeamParam(LAM, WS * math.sqrt(2)), WS).eta
    assert eta[0] == pytest.approx(8 / 9, abs=1e-12)
    assert eta[1] == pytest.approx(1.0, abs=1e-12)
    assert eta[2] == pytest.approx(24 / 25, abs=1e-12)
    assert min(eta) == eta[0]


def test_coupling_matched_to_gaussian():
    eta = coupling_from_acceptance(BeamParam(LAM, WS), WS).eta
    assert eta[0] == pytest.approx(1.0, abs=1e-12)
    assert eta[2] < eta[1] < 1.0


def test_coupling_vanishes_for_huge_acceptance():
    eta = coupling_from_acceptance(BeamParam(LAM, 1.0), WS).eta
    assert max(eta) < 1e-6


def test_lg_model_common_waist_couples_every_mode():
    eta = coupling_from_acceptance(BeamParam(LAM, WS), WS, model="lg").eta
    assert eta == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)


def test_transmissions_include_hologram_efficiency():
    cv = coupling_from_acceptance(BeamParam(LAM, WS), WS, hologram_efficiency=0.85)
    assert cv.transmissions[0] == pytest.approx(math.sqrt(0.85))


def test_random_configurations_stay_in_unit_interval():
    rng = np.random.default_rng(1)
    n = 10_000
    f = rng.uniform(2e-3, 0.1, n)
    z = rng.uniform(1e-3, 1.0, n)
    df = rng.uniform(1e-3, 0.2, n)
    wf = rng.uniform(1e-6, 10e-6, n)
    ws = rng.uniform(20e-6, 500e-6, n)
    etas = np.array([coupling_vector(LensConfig(*cfg), w).eta for *cfg, w in zip(f, z, df, wf, ws)])
    assert etas.shape == (n, 3)
    assert np.all((etas >= 0) & (etas <= 1))


def test_matched_geometry_gives_unit_gaussian_coupling():
    model = OpticsModel()
    z, df = matched_geometry(WS, 2.3e-6, 0.01, LAM)
    assert model.matched_position == pytest.approx(z)
    eta = model.coupling_at(z).eta
    assert eta[0] == pytest.approx(1.0, abs=1e-9)
    assert eta == pytest.approx((1.0, 8 / 9, 0.75), abs=1e-9)


def test_filtering_direction_exists_both_ways():
    model = OpticsModel()
    zs = np.linspace(*model.default_bounds(), 801)
    etas = model.sweep(zs)
    assert np.any(etas[:, 1] > etas[:, 0])
    assert np.any(etas[:, 0] > etas[:, 1])


def test_coupling_is_continuous():
    model = OpticsModel()
    rng = np.random.default_rng(3)
    for z in model.matched_position + rng.uniform(-8e-4, 8e-4, 20):
        base = np.array(model.coupling_at(z).eta)
        steps = [np.abs(np.array(model.coupling_at(z + h).eta) - base).max() for h in (1e-6, 1e-7, 1e-8)]
        assert steps[2] < steps[1] < steps[0] < 0.05
        # first order: shrinking the step tenfold shrinks the change about tenfold
        assert steps[2] < 0.2 * steps[1]


def test_mode_optimal_positions():
    model = OpticsModel()
    bounds = model.default_bounds()
    for l in range(3):
        p = model.mode_optimal_position(l, bounds)
        zs = np.linspace(*bounds, 2001)
        assert model.coupling_at(p).eta[l] >= model.sweep(zs)[:, l].max() - 1e-12


def test_lens_config_validation():
    with pytest.raises(ValueError):
        LensConfig(0.01, -1.0, 0.02)
