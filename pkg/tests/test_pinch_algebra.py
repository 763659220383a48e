import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_lab import pinch_algebra as pa
from yamabe_lab.errors import HypothesisViolated

# cubes of the entries must stay in the normal floating-point range
finite = st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: v == 0 or abs(v) >= 1e-90)


def tuples(min_n=3, max_n=8):
    return st.integers(min_n, max_n).flatmap(lambda n: st.lists(finite, min_size=n, max_size=n))


@st.composite
def pinched(draw):
    n = draw(st.integers(3, 8))
    R = draw(st.floats(1e-3, 1e3))
    eps = draw(st.floats(1.0 / (10 * n), 1.0 / n))
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=n - 1, max_size=n - 1))) + 1e-9
    w = w / w.sum()
    lam = np.concatenate([[eps * R], eps * R + R * (1 - n * eps) * w])
    return lam, eps


def test_eigen_tuple_sorts_and_sums():
    e = pa.EigenTuple((2.0, 1.0, 1.0))
    assert e.values == (1.0, 1.0, 2.0)
    assert (e.R, e.ric_norm_sq, e.tr_cubed) == (4.0, 6.0, 10.0)
    with pytest.raises(ValueError):
        pa.EigenTuple((1.0, 2.0))
    with pytest.raises(ValueError):
        pa.EigenTuple((1.0, 2.0, math.nan))


@pytest.mark.parametrize("lam,J", [((1, 1, 2), 8.0), ((1, 2, 3), 24.0), ((5, 5, 5, 5), 0.0)])
def test_j_functional_examples(lam, J):
    assert pa.j_functional(lam) == J
    assert pa.j_centered(lam) == pytest.approx(J, abs=1e-12)


@pytest.mark.parametrize("lam,side", [((1, 1, 2), 4.0), ((1, 2, 3), 12.0), ((0.7, 0.7, 0.7, 0.7), 0.0)])
def test_triple_sum_examples(lam, side):
    chk = pa.triple_sum_identity(lam)
    assert chk.lhs == pytest.approx(side, abs=1e-13)
    assert chk.rhs == pytest.approx(side, abs=1e-13)
    assert chk.gap <= 1e-15


def test_lower_bound_examples():
    assert pa.j_lower_bound_check((1, 2, 3), 1 / 6) == pytest.approx(16.0, rel=1e-14)
    assert pa.j_lower_bound_check((1, 1, 2), 1 / 4) == pytest.approx(16 / 3, rel=1e-14)
    assert pa.exact_margin((1, 2, 3), Fraction(1, 6)) == 16
    assert pa.exact_margin((1, 1, 2), Fraction(1, 4)) == Fraction(16, 3)


@pytest.mark.parametrize("n", [3, 4, 5, 8])
@pytest.mark.parametrize("c", [0.1, 1.0, 7.3, 1e3])
def test_equal_tuples_have_exactly_zero_margin(n, c):
    assert pa.j_lower_bound_check([c] * n, 1.0 / n) == 0.0


def test_lower_bound_rejects_unpinched_tuples():
    with pytest.raises(HypothesisViolated):
        pa.j_lower_bound_check((0.1, 2, 3), 0.2)
    with pytest.raises(HypothesisViolated):
        pa.j_lower_bound_check((-1, -1, -1), 0.1)


def test_a_matrix_diagonal_examples():
    a = pa.a_matrix_diagonal((1, 1, 2))
    np.testing.assert_allclose(a.literal, [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(a.reference, [0.25, 0.25, 0], atol=1e-15)
    b = pa.a_matrix_diagonal((1, 2, 3))
    np.testing.assert_allclose(b.literal, [-0.5, 1.0, 2.5], atol=1e-14)
    assert b.literal.min() < 0 <= b.reference.min()
    e = pa.a_matrix_diagonal((2, 2, 2, 2))
    assert np.all(e.literal == 0) and np.all(e.reference == 0)


def test_a_matrix_literal_matches_symbolic_combination():
    lam = sp.symbols("l0:3")
    n = 3
    R = sum(lam)
    q = sum(x**2 for x in lam)
    vals = (sp.Rational(1, 3), 2, sp.Rational(7, 2))
    for i in range(n):
        B = (n - 1) * q + n * R * lam[i] - n * (n - 1) * lam[i] ** 2 - R**2
        A = B / (2 * (n - 1) * (n - 2)) + (n * lam[i] ** 2 - R * lam[i]) / (2 * (n - 2))
        simplified = ((n - 1) * q + R * lam[i] - R**2) / (2 * (n - 1) * (n - 2))
        assert sp.simplify(A - simplified) == 0
        got = pa.a_matrix_diagonal([float(v) for v in vals]).literal[i]
        assert got == pytest.approx(float(simplified.subs(dict(zip(lam, vals)))), abs=1e-13)


@settings(max_examples=300, deadline=None)
@given(tuples())
def test_triple_sum_identity_property(vals):
    assert pa.triple_sum_identity(vals).gap <= pa.TRIPLE_SUM_TOL


@settings(max_examples=300, deadline=None)
@given(pinched())
def test_margin_nonnegative_property(data):
    lam, eps = data
    margin = pa.j_lower_bound_check(lam, eps)
    J = pa.j_functional(lam)
    assert margin >= -pa.MARGIN_TOL * (1 + abs(J))


@settings(max_examples=100, deadline=None)
@given(pinched())
def test_float_margin_tracks_exact_margin(data):
    lam, eps = data
    exact = pa.exact_margin(lam, eps)
    scale = 1 + max(abs(v) for v in lam) ** 3
    assert abs(float(exact) - pa.j_lower_bound_check(lam, eps)) <= 1e-11 * scale


@settings(max_examples=200, deadline=None)
@given(tuples(3, 6), st.sampled_from([2.0, 10.0, 1.0 / 3.0]))
def test_cubic_homogeneity(vals, c):
    lam = np.array(vals)
    scale = max(1.0, np.max(np.abs(c * lam)) ** 3)
    assert abs(pa.j_centered(c * lam) - c**3 * pa.j_centered(lam)) <= 1e-12 * scale * 8


@settings(max_examples=100, deadline=None)
@given(tuples(3, 5), st.randoms(use_true_random=False))
def test_permutation_invariance(vals, rnd):
    perm = list(vals)
    rnd.shuffle(perm)
    a, b = pa.EigenTuple(vals), pa.EigenTuple(perm)
    assert (a.R, a.ric_norm_sq, a.tr_cubed) == (b.R, b.ric_norm_sq, b.tr_cubed)
    scale = max(1.0, max(abs(v) for v in vals) ** 3)
    assert abs(pa.j_functional(vals) - pa.j_functional(perm)) <= 1e-12 * scale * 8


@settings(max_examples=100, deadline=None)
@given(tuples(3, 7))
def test_nu_is_nonnegative(vals):
    assert np.all(pa.a_matrix_diagonal(vals).reference >= 0)


def test_closed_form_has_constant_rate():
    t, t0, f0, d = sp.symbols("t t0 f0 delta", positive=True)
    f = (3 * (t - t0) + f0 ** (-1 / d)) ** (-d)
    assert sp.simplify(sp.powdenest(sp.diff(f ** (-1 / d), t), force=True)) == 3
    # and it solves f' = -3 delta f^(1 + 1/delta) (n eps = 3 delta)
    assert sp.simplify(sp.powdenest(sp.diff(f, t) + 3 * d * f ** (1 + 1 / d), force=True)) == 0


def test_ode_examples():
    o = pa.ode_comparison(1.0, 3, 1.0, 0.0, 1.0, points=11)
    assert o.closed[-1] == pytest.approx(0.25, rel=1e-15)
    assert o.numeric[-1] == pytest.approx(0.25, rel=1e-9)
    assert o.bound_holds
    z = pa.ode_comparison(0.2, 4, 0.0, 0.1, 1.0)
    assert np.all(z.numeric == 0) and np.all(z.closed == 0)
    with pytest.raises(ValueError):
        pa.ode_comparison(0.0, 3, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        pa.ode_comparison(0.1, 3, 1.0, 1.0, 0.5)


@pytest.mark.parametrize("eps,n,f0", list(itertools.product((0.05, 0.3), (3, 6), (0.05, 2.0))))
def test_ode_matches_closed_form(eps, n, f0):
    o = pa.ode_comparison(eps, n, f0, 0.05, 5.0)
    assert o.max_rel_error <= pa.ODE_TOL
    if f0 <= (3 * 0.05) ** (-n * eps / 3):
        assert o.bound_holds


def test_fuzz_suite_is_worker_independent():
    a = pa.fuzz_suite(30_000, (3, 5), seed=7, workers=1, batch=10_000)
    b = pa.fuzz_suite(30_000, (3, 5), seed=7, workers=2, batch=10_000)
    assert a.lines() == b.lines()
    assert a.passed
    assert {name for name, _ in a.checks} == {
        "triple_sum", "pinched_margin", "source_trace", "homogeneity", "permutation"}


def test_draw_pinched_respects_hypothesis():
    lam, eps = pa.draw_pinched(np.random.default_rng(3), 1000, 5)
    R = lam.sum(axis=1)
    assert np.all(lam[:, 0] >= eps * R * (1 - 1e-12))
    assert np.all(np.diff(lam, axis=1) >= 0)
