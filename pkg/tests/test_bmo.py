import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bmolab.bmo import (
    ball_mask,
    bmo_norm,
    dyadic_radii,
    lattice_min_max,
    linf_bmo_norm,
    mollify,
    mollify_coefficients,
    normalize_mean,
    truncate_log,
)
from bmolab.corpus import member_rng, random_fourier_field
from bmolab.gallery import gallery_field
from bmolab.grid import Grid, ScalarField, integrate, norms

from oracles import brute_force_bmo_1d

G2 = Grid(2, 32, 1.0)


def _field(seed, grid=G2, **kw):
    return random_fourier_field(grid, member_rng(seed, 0), **kw)


def test_constant_has_zero_oscillation():
    assert bmo_norm(ScalarField.constant(G2, 4.2)).value == 0.0


@given(st.integers(0, 10**6), st.floats(-50, 50))
def test_invariant_under_added_constant(seed, c):
    f = _field(seed)
    a = bmo_norm(f).value
    b = bmo_norm(f + ScalarField.constant(G2, c)).value
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


@given(st.integers(0, 10**6), st.floats(-20, 20).filter(lambda c: abs(c) > 1e-3))
def test_homogeneous_for_p1(seed, c):
    f = _field(seed)
    assert bmo_norm(f * c).value == pytest.approx(abs(c) * bmo_norm(f).value, rel=1e-12)


@given(st.integers(0, 10**6))
def test_monotone_in_ball_family(seed):
    f = _field(seed)
    radii = dyadic_radii(G2)
    vals = [bmo_norm(f, radii=radii[:k]).value for k in range(1, len(radii) + 1)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_p1_below_p2_and_equivalent():
    ratios = []
    for i in range(10):
        f = random_fourier_field(G2, member_rng(3, i), kmax=6, decay=1.0)
        b1, b2 = bmo_norm(f, 1).value, bmo_norm(f, 2).value
        assert b1 <= b2 * (1 + 1e-12)
        ratios.append(b2 / b1)
    assert max(ratios) < 2.0


def test_sine_against_brute_force():
    g = Grid(1, 64, 1.0)
    f = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x))
    est = bmo_norm(f)
    assert est.value == pytest.approx(brute_force_bmo_1d(f.values, g.h, est.radii), rel=1e-12)
    assert est.value <= 2.0
    assert est.value >= est.per_radius[-1]


def test_gallery_john_nirenberg_ratio_bounded():
    g = Grid(2, 128)
    f = ScalarField(g, gallery_field("log_vortex", {"eps": 0.5}, g).frame().b[..., 0, 1])
    b1, b2 = bmo_norm(f, 1).value, bmo_norm(f, 2).value
    assert 1.0 <= b2 / b1 <= 2.0


def test_rejects_coarse_grid_and_bad_p():
    with pytest.raises(ValueError):
        bmo_norm(ScalarField.constant(Grid(2, 8), 1.0))
    with pytest.raises(ValueError):
        bmo_norm(ScalarField.constant(G2, 1.0), p=3)


@given(st.integers(0, 10**6), st.sampled_from([0.1, 0.2, 0.3]))
def test_normalize_mean_zeroes_ball_average(seed, r):
    f = _field(seed)
    out = normalize_mean(f, r)
    mask = ball_mask(G2, np.zeros(2), r)
    assert abs(out.values[mask].mean()) <= 1e-12 * max(1.0, np.abs(f.values).max())
    assert bmo_norm(out).value == pytest.approx(bmo_norm(f).value, rel=1e-12)


def test_mollify_constant_is_constant():
    out = mollify(ScalarField.constant(G2, 2.5), 0.1)
    np.testing.assert_allclose(out.values, 2.5, rtol=1e-12)


@given(st.integers(0, 10**6), st.sampled_from([1 / 16, 1 / 10, 1 / 8]))
def test_mollify_preserves_integral(seed, eps):
    f = _field(seed)
    assert integrate(mollify(f, eps)) == pytest.approx(integrate(f), rel=1e-10, abs=1e-12)


@given(st.integers(0, 10**6))
def test_mollify_does_not_raise_bmo_much(seed):
    g = Grid(2, 64)
    f = random_fourier_field(g, member_rng(seed, 0), kmax=6, decay=1.0)
    assert bmo_norm(mollify(f, 1 / 16)).value <= 1.05 * bmo_norm(f).value


def test_mollified_log_vortex_converges():
    g = Grid(2, 64)
    f = ScalarField(g, gallery_field("log_vortex", {"eps": 0.5}, g).frame().b[..., 0, 1])
    eps = 4 * g.h
    d1 = norms(mollify(f, eps) - f).l1
    d2 = norms(mollify(f, eps / 2) - f).l1
    assert d2 < d1
    assert d1 <= 4 * d2


def test_mollify_range_checked():
    with pytest.raises(ValueError):
        mollify(ScalarField.constant(G2, 1.0), G2.h)
    with pytest.raises(ValueError):
        mollify(ScalarField.constant(G2, 1.0), 0.5)


def test_time_mollification_of_constant_sequence():
    fields = [ScalarField.constant(G2, 1.0)] * 5
    out = mollify(fields, 0.1, times=np.linspace(0, 1, 5), time_epsilon=0.3)
    for o in out:
        np.testing.assert_allclose(o.values, 1.0, rtol=1e-12)


def test_truncate_log_values():
    g = Grid(2, 16, 4.0)
    U, Lo = truncate_log(1, 1.0, g, center=np.zeros(2))
    r = g.distance(np.zeros(2))
    on_circle = np.isclose(r, 1.0)
    assert np.all(U.values[on_circle] == 1.0)
    assert U.values.max() <= 1.0 and U.values.min() >= 0.0
    assert Lo.values.max() <= 0.0 and Lo.values.min() >= -1.0


def test_truncations_have_comparable_bmo():
    g = Grid(2, 128, 4.0)
    vals = [bmo_norm(truncate_log(m, 0.5, g, center=np.full(2, 2.0))[0]).value for m in (1, 2, 3)]
    assert min(vals) > 0
    assert max(vals) / min(vals) <= 2.0


def test_lattice_min_max():
    f = _field(1)
    mn, mx = lattice_min_max(f, f)
    np.testing.assert_array_equal(mn.values, f.values)
    np.testing.assert_array_equal(mx.values, f.values)
    g = _field(2)
    mn, mx = lattice_min_max(f, g)
    np.testing.assert_allclose(mn.values + mx.values, f.values + g.values)


def test_lattice_operations_stay_bmo_bounded():
    worst = 0.0
    for i in range(50):
        r = member_rng(5, i)
        f, g = random_fourier_field(G2, r), random_fourier_field(G2, r)
        mn, mx = lattice_min_max(f, g)
        bf, bg = bmo_norm(f).value, bmo_norm(g).value
        worst = max(worst, bmo_norm(mn).value / (bf + bg), bmo_norm(mx).value / (bf + bg))
    assert math.isfinite(worst) and worst <= 2.0


def test_linf_bmo_of_coefficients():
    g = Grid(2, 32)
    assert linf_bmo_norm(gallery_field("identity", {}, g)) == 0.0
    st_ = gallery_field("smooth_skew", {}, g)
    one = linf_bmo_norm(st_)
    assert linf_bmo_norm(st_, times=np.linspace(0, 1, 7)) == one
    osc = gallery_field("time_oscillating", {"amp": 0.5, "period": 1.0}, g)
    times = np.linspace(0, 1, 41)
    assert linf_bmo_norm(osc, times) == pytest.approx(1.5 * one, rel=0.05)


def test_mollified_coefficients_keep_lambda():
    g = Grid(2, 32)
    A = gallery_field("log_vortex", {}, g)
    Am = mollify_coefficients(A, 0.1)
    assert Am.lam == A.lam
    lo, hi = Am.frame().ellipticity_bounds()
    assert lo >= A.lam * (1 - 1e-12)
