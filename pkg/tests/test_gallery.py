import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bmolab.bmo import bmo_norm
from bmolab.gallery import (
    FAMILIES,
    CoefficientField,
    EllipticityError,
    MatrixFieldFrame,
    gallery_field,
    skew_edge_velocity,
)
from bmolab.grid import Grid, ScalarField


def _frames(name, grid):
    A = gallery_field(name, {}, grid)
    return A, A.frames(np.linspace(0, 1, 5)) if not A.stationary else [A.frame()]


def test_identity_field():
    A = gallery_field("identity", {}, Grid(2, 8))
    fr = A.frame()
    assert A.lam == 1.0
    assert np.all(fr.a == np.eye(2))
    assert np.all(fr.b == 0)


@pytest.mark.parametrize("name", FAMILIES)
@pytest.mark.parametrize("dim", [2, 3])
def test_parts_are_symmetric_and_skew(name, dim):
    g = Grid(dim, 8 if dim == 3 else 16)
    try:
        A, frames = _frames(name, g)
    except ValueError:
        pytest.skip(f"{name} is not defined in {dim}-D")
    for fr in frames:
        assert np.all(fr.a == np.swapaxes(fr.a, -1, -2))
        assert np.all(fr.b == -np.swapaxes(fr.b, -1, -2))
        assert np.all(np.isfinite(fr.A))


@pytest.mark.parametrize("name", FAMILIES)
@given(seed=st.integers(0, 2**32 - 1))
def test_ellipticity_on_random_probes(name, seed):
    g = Grid(2, 16)
    A, frames = _frames(name, g)
    r = np.random.default_rng(seed)
    probes = np.vstack([np.eye(2), r.normal(size=(8, 2))])
    for fr in frames:
        q = np.einsum("pi,...ij,pj->...p", probes, fr.a, probes)
        nrm = np.sum(probes**2, axis=1)
        assert np.all(q >= A.lam * nrm * (1 - 1e-12))
        assert np.all(q <= nrm / A.lam * (1 + 1e-12))


def test_ellipticity_violation_raises():
    g = Grid(2, 8)
    with pytest.raises(EllipticityError):
        gallery_field("anisotropic", {"diag": [1.0, -1.0]}, g)
    with pytest.raises(EllipticityError):
        gallery_field("identity", {"lambda": 2.0}, g)
    bad = np.zeros(g.shape + (2, 2))
    with pytest.raises(EllipticityError):
        CoefficientField.stationary_from(MatrixFieldFrame(g, bad), 0.5)


def test_log_vortex_bmo_stable_while_sup_grows():
    vals, sups = [], []
    for N in (64, 128):
        A = gallery_field("log_vortex", {"eps": 0.5}, Grid(2, N))
        b12 = A.frame().b[..., 0, 1]
        vals.append(bmo_norm(ScalarField(A.grid, b12)).value)
        sups.append(np.abs(b12).max())
    assert abs(vals[1] / vals[0] - 1) <= 0.10
    assert sups[1] - sups[0] == pytest.approx(0.5 * math.log(2), rel=0.05)


def test_log_vortex_bmo_across_three_resolutions():
    vals, sups = [], []
    for N in (64, 128, 256):
        A = gallery_field("log_vortex", {"eps": 0.5}, Grid(2, N))
        vals.append(bmo_norm(ScalarField(A.grid, A.frame().b[..., 0, 1])).value)
        sups.append(A.skew_sup())
    assert max(vals) / min(vals) - 1 < 0.15
    assert sups[0] < sups[1] < sups[2]


def test_stream_function_drift_is_divergence_free():
    g = Grid(2, 32)
    A = gallery_field("stream_function", {}, g)
    v = skew_edge_velocity(A.frame())
    div = sum((c - np.roll(c, 1, i)) / g.h for i, c in enumerate(v))
    assert np.abs(div).max() <= 1e-10


def test_time_oscillating_frames_follow_envelope():
    g = Grid(2, 16)
    A = gallery_field("time_oscillating", {"amp": 0.5, "period": 1.0}, g)
    base = gallery_field("smooth_skew", {}, g).frame().b
    for t in (0.0, 0.25, 0.6):
        np.testing.assert_allclose(A.frame(t).b, (1 + 0.5 * math.sin(2 * math.pi * t)) * base, atol=1e-14)
    assert not A.stationary


def test_log_vortex_needs_two_dimensions():
    with pytest.raises(ValueError):
        gallery_field("log_vortex", {}, Grid(1, 16))


def test_unknown_family():
    with pytest.raises(ValueError):
        gallery_field("nope", {}, Grid(2, 8))


def test_transpose_flips_skew_part():
    A = gallery_field("log_vortex", {}, Grid(2, 16))
    At = A.transpose()
    np.testing.assert_array_equal(At.frame().b, -A.frame().b)
    np.testing.assert_array_equal(At.frame().a, A.frame().a)
