import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_lab import Chart, build_field, is_undefined, ricci_eigenvalues
from yamabe_lab import flow, monitors
from yamabe_lab.errors import AllNodesUndefined, HypothesisViolated, InsufficientHistory, UnsupportedChart
from yamabe_lab.monitors import MonitorRecord, SingularityKind, classify_singularity

NA = float("nan")


def synthetic_records(t, sup_R):
    return [
        MonitorRecord(t=float(a), dt=0.0, sup_R=float(s), inf_R=float(s), eps_min=NA, delta=NA, f_max=NA,
                      f_bound=NA, Z_min=NA, res_scalar=NA, res_ricci=NA, res_lemma41=NA, chow_gap=NA,
                      Tm_t_supR=NA, t_supR=float(a * s))
        for a, s in zip(t, sup_R)
    ]


def sphere(n=3, N=129, scale=1.0):
    f = build_field(Chart.SPHERE, n, N, profile="sphere_bubble")
    return f.shifted(0.5 * math.log(scale))


def gaussian(N=128, a=0.3):
    return build_field(Chart.RADIAL, 3, N, r_max=4.0, profile=f"gaussian_bump({a}, 1.0)")


def test_flat_residuals_vanish():
    f = build_field(Chart.RADIAL, 3, 64, r_max=2.0)
    g = f.with_phi(f.phi, 0.1)
    assert monitors.scalar_evolution_residual(f, g) == 0.0
    assert monitors.ricci_evolution_residual(f, g) == 0.0
    assert is_undefined(monitors.pinching_identity_residual(f, g))


def test_residual_needs_time_advance():
    f = gaussian()
    with pytest.raises(ValueError):
        monitors.scalar_evolution_residual(f, f)


def test_residuals_shrink_along_a_real_step():
    st0 = flow.FlowState.start(gaussian(256), 0.5)
    st1 = st0
    for _ in range(50):
        st1 = flow.step(st1)
    a, b = st0.field, st1.field
    assert monitors.scalar_evolution_residual(a, b) < 1e-3
    assert monitors.ricci_evolution_residual(a, b) < 1e-3
    assert monitors.pinching_identity_residual(a, b) < 1e-2


def test_ricci_laplacian_rejects_periodic_box():
    f = build_field(Chart.PERIODIC, 3, 64, L=2 * math.pi, profile="gaussian_bump(0.2, 0.5)")
    with pytest.raises(UnsupportedChart):
        monitors.ricci_laplacian(f)


def test_harnack_on_shrinking_homothety():
    f = sphere(scale=0.7)  # homothety at t = 0.05 from R0 = 6
    rep = monitors.harnack_min(f, 0.05)
    R = 6 / 0.7
    assert rep.Z_min == pytest.approx(R * R + R / 0.05, rel=1e-3)
    assert rep.Z_min == pytest.approx(244.9, abs=0.05)


def test_harnack_needs_positive_ricci_and_time():
    with pytest.raises(AllNodesUndefined):
        monitors.harnack_min(build_field(Chart.RADIAL, 3, 64, r_max=2.0), 1.0)
    with pytest.raises(ValueError):
        monitors.harnack_min(sphere(), 0.0)


def test_einstein_snapshot_monitors():
    f = sphere(n=4)
    rep = monitors.pinching_monitor(f, 0.25, 0.1)
    assert rep.f_max < 1e-6 and rep.passed
    assert monitors.epsilon_monitor(f) == pytest.approx(0.25, abs=1e-5)
    assert monitors.eigenvalue_gap_monitor(f, 0.25) < 1e-4
    assert monitors.einstein_defect(f) < 1e-8


def test_flat_epsilon_is_undefined_and_pinching_refuses():
    f = build_field(Chart.RADIAL, 3, 64, r_max=2.0)
    assert is_undefined(monitors.epsilon_monitor(f))
    with pytest.raises(HypothesisViolated):
        monitors.pinching_monitor(f, 0.2, 1.0)
    with pytest.raises(ValueError):
        monitors.pinching_monitor(sphere(), 0.5, 1.0)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-0.4, 0.4), n=st.integers(3, 6))
def test_ricci_source_trace_is_twice_norm(a, n):
    """tr B = 2|Rc|^2 - 2 R^2 / n after contracting the source term."""
    f = build_field(Chart.RADIAL, n, 64, r_max=3.0, profile=f"gaussian_bump({a!r}, 1.0)")
    cs = ricci_eigenvalues(f)
    b_rad, b_tan = monitors.ricci_source(cs)
    trace = b_rad + (n - 1) * b_tan
    scale = 1 + cs.R**2 + cs.mu_rad**2 + cs.mu_tan**2
    np.testing.assert_allclose(trace / scale, monitors.ricci_source_trace(f) / scale, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-1.0, 1.0))
def test_traceless_ratio_is_scale_covariant(c):
    """f scales like R^delta: exp(-2 delta c)."""
    f = gaussian(64, 0.4)
    d = 0.4
    a = monitors.traceless_ratio(ricci_eigenvalues(f), d)
    b = monitors.traceless_ratio(ricci_eigenvalues(f.shifted(c)), d)
    ok = np.isfinite(a) & (ricci_eigenvalues(f).R > 0)
    np.testing.assert_allclose(b[ok], math.exp(-2 * d * c) * a[ok], rtol=1e-8, atol=1e-14)


def test_collector_on_flat_run():
    col = monitors.RecordCollector()
    f = build_field(Chart.RADIAL, 3, 64, r_max=2.0)
    res = flow.run(flow.FlowState.start(f), 0.1, monitor=col, record_every=100)
    assert all(r.sup_R == 0.0 and math.copysign(1, r.sup_R) == 1 for r in res.records)
    assert all(is_undefined(r.eps_min) for r in res.records)
    assert is_undefined(res.records[0].res_scalar) and res.records[1].res_scalar == 0.0


def test_record_rejects_infinities():
    with pytest.raises(ValueError):
        synthetic_records([0.0], [math.inf])


def test_classifier_shrinking_homothety_is_type_one():
    t = np.linspace(0.0, 0.16, 40)
    recs = synthetic_records(t, 6 / (1 - 6 * t))
    v = classify_singularity(recs, flow.StopReason.BLOWUP)
    assert v.kind is SingularityKind.TYPE_I
    assert v.Omega == pytest.approx(1.0, abs=0.02)
    assert v.T_hat == pytest.approx(1 / 6, rel=1e-9)


def test_classifier_flat_is_no_singularity():
    v = classify_singularity(synthetic_records(np.linspace(0, 1, 20), np.zeros(20)), flow.StopReason.REACHED_T_END)
    assert v.kind is SingularityKind.NONE


def test_classifier_log_divergence_is_type_two_a():
    T = 0.2
    gap = 10.0 ** -np.linspace(1.0, 9.0, 48)
    recs = synthetic_records(T - gap, np.log(1 / gap) / gap)
    v = classify_singularity(recs, flow.StopReason.BLOWUP)
    assert v.kind is SingularityKind.TYPE_IIA


def test_classifier_expanding_homothety_is_type_three():
    t = np.linspace(0.1, 10.0, 64)
    v = classify_singularity(synthetic_records(t, -6 / (1 + 6 * t)), flow.StopReason.REACHED_T_END)
    assert v.kind is SingularityKind.TYPE_III
    assert v.A == pytest.approx(1.0, abs=0.03)


def test_classifier_needs_sixteen_records():
    with pytest.raises(InsufficientHistory):
        classify_singularity(synthetic_records(np.linspace(0, 1, 8), np.ones(8)), flow.StopReason.REACHED_T_END)


def test_classifier_is_deterministic():
    t = np.linspace(0.0, 0.16, 40)
    recs = synthetic_records(t, 6 / (1 - 6 * t))
    assert classify_singularity(recs, "BlowUpReached") == classify_singularity(recs, "BlowUpReached")


def test_with_blowup_time_fills_column():
    t = np.linspace(0.0, 0.1, 4)
    recs = monitors.with_blowup_time(synthetic_records(t, 6 / (1 - 6 * t)), 1 / 6)
    assert [r.Tm_t_supR for r in recs] == pytest.approx([1.0] * 4)
    assert monitors.with_blowup_time(recs, NA) == recs


def test_classifier_growing_curvature_without_blowup_is_type_two_b():
    t = np.linspace(0.1, 10.0, 40)
    v = classify_singularity(synthetic_records(t, t), flow.StopReason.REACHED_T_END)
    assert v.kind is SingularityKind.TYPE_IIB


def test_classifier_decaying_curvature_is_no_singularity():
    t = np.linspace(0.0, 5.0, 30)
    v = classify_singularity(synthetic_records(t, 4 * np.exp(-1.3 * t)), flow.StopReason.REACHED_T_END)
    assert v.kind is SingularityKind.NONE


def test_rescaled_harnack_reports_both_clocks():
    base = sphere(scale=0.7).with_phi(sphere(scale=0.7).phi, 0.05)
    later = sphere(scale=0.4).with_phi(sphere(scale=0.4).phi, 0.1)
    resc = flow.parabolic_rescale([base, later], base_node=0, base_index=0)
    rep = monitors.rescaled_harnack(resc, 1)
    # with the flow clock Z scales like curvature squared
    assert rep.flow_clock == pytest.approx(monitors.harnack_min(later, 0.1).Z_min / resc.Q**2, rel=1e-6)
    assert rep.rescaled_clock > 0
    assert is_undefined(monitors.rescaled_harnack(resc, 0).rescaled_clock)
