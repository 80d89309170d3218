import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from bmolab.corpus import member_rng, random_fourier_field
from bmolab.gallery import FAMILIES, gallery_field
from bmolab.grid import Grid, ScalarField, integrate, norms
from bmolab.solver import (
    SolveConfig,
    SolverError,
    assemble_operator,
    mollified_convergence_check,
    solve_backward,
    solve_cauchy,
    step,
    step_times,
)

from oracles import theta_heat_evolution

G = Grid(2, 16, 1.0)
fields = st.sampled_from(FAMILIES)
seeds = st.integers(0, 10**6)


def _cfg(grid, lam=1.0, T=0.01, **kw):
    return SolveConfig.default(grid, lam, T, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(dt=0.2, T=0.1)
    with pytest.raises(ValueError):
        SolveConfig(dt=0.01, T=0.1, theta=0.3)
    with pytest.raises(ValueError):
        SolveConfig(dt=0.01, T=0.1, linear_tol=0.0)
    with pytest.raises(ValueError):
        SolveConfig(dt=0.01, T=0.1, method="lu")
    cfg = SolveConfig.default(G, 0.5, 1.0)
    assert cfg.dt == pytest.approx(G.h**2 * 0.5 / 4)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_identity_operator_is_discrete_laplacian(dim):
    g = Grid(dim, 6, 1.3)
    op, sym, skew = assemble_operator(gallery_field("identity", {}, g).frame())
    one = sp.diags([1, -2, 1], [-1, 0, 1], shape=(6, 6), format="lil")
    one[0, 5] = one[5, 0] = 1
    one = one.tocsr() / g.h**2
    lap = sp.csr_matrix((g.size, g.size))
    for ax in range(dim):
        parts = [sp.identity(6)] * dim
        parts[ax] = one
        term = parts[0]
        for p in parts[1:]:
            term = sp.kron(term, p)
        lap = lap + term
    assert abs(op - lap).max() < 1e-9 / g.h**2
    assert skew.nnz == 0 or abs(skew).max() == 0


@pytest.mark.parametrize("name", FAMILIES)
def test_operator_structure(name):
    A = gallery_field(name, {}, G)
    op, sym, skew = assemble_operator(A.frame(0.3))
    assert abs(op @ np.ones(G.size)).max() < 1e-9
    assert abs(np.ones(G.size) @ op).max() < 1e-9
    assert abs(sym - sym.T).max() == 0
    assert abs(skew + skew.T).max() == 0
    opT, _, _ = assemble_operator(A.frame(0.3).transpose())
    assert abs(opT - op.T).max() < 1e-12 * abs(op).max()


def test_constant_is_stationary():
    A = gallery_field("log_vortex", {}, G)
    u = ScalarField.constant(G, 3.0)
    out = step(u, A.frame(), _cfg(G, method="direct"))
    np.testing.assert_allclose(out.values, 3.0, rtol=1e-12)


def test_zero_data_gives_zero_trace():
    tr = solve_cauchy(ScalarField.constant(G, 0.0), gallery_field("smooth_skew", {}, G), 0.0, _cfg(G))
    assert np.all(tr.final.values == 0) and np.all(tr.l2sq == 0)


@given(fields, seeds)
def test_mass_conserved(name, seed):
    A = gallery_field(name, {}, G)
    f = random_fourier_field(G, member_rng(seed, 0))
    tr = solve_cauchy(f, A, 0.0, _cfg(G, A.lam, method="direct"))
    assert abs(integrate(tr.final) - integrate(f)) <= 1e-10 * norms(f).l1


@given(fields, seeds, st.sampled_from([0.5, 1.0]))
def test_skew_part_is_energy_neutral(name, seed, theta):
    A = gallery_field(name, {}, G)
    f = random_fourier_field(G, member_rng(seed, 0))
    tr = solve_cauchy(f, A, 0.0, _cfg(G, A.lam, theta=theta, method="direct"))
    bsup = max(A.skew_sup(), 1e-300)
    assert np.all(np.abs(tr.skew) <= 1e-10 * tr.grad_sq * bsup + 1e-300)


@given(fields, seeds)
def test_energy_inequality_and_monotone_l2(name, seed):
    A = gallery_field(name, {}, G)
    f = random_fourier_field(G, member_rng(seed, 0))
    tr = solve_cauchy(f, A, 0.0, _cfg(G, A.lam, method="direct"))
    lhs, rhs = tr.energy_balance()
    assert lhs <= rhs * (1 + 1e-6)
    l2 = np.concatenate([[tr.initial_l2sq], tr.l2sq])
    assert np.all(np.diff(l2) <= 1e-12 * l2[0])


@given(fields, seeds)
def test_duality(name, seed):
    A = gallery_field(name, {}, G)
    cfg = _cfg(G, A.lam, T=0.02, method="direct")
    r = member_rng(seed, 0)
    f, g = random_fourier_field(G, r), random_fourier_field(G, r)
    u = solve_cauchy(f, A, 0.0, cfg).final
    v = solve_backward(g, A, cfg.T, cfg).final
    hv = G.cell_volume
    gap = abs(hv * np.sum(u.values * g.values) - hv * np.sum(f.values * v.values))
    assert gap <= 2 * cfg.linear_tol * norms(f).l2 * norms(g).l2 + 1e-14 * norms(f).l2 * norms(g).l2


def test_duality_log_vortex_iterative():
    g = Grid(2, 64)
    A = gallery_field("log_vortex", {}, g)
    cfg = SolveConfig.default(g, 1.0, 0.005, method="bicgstab")
    r = member_rng(0, 0)
    f, h = random_fourier_field(g, r), random_fourier_field(g, r)
    u = solve_cauchy(f, A, 0.0, cfg).final
    v = solve_backward(h, A, cfg.T, cfg).final
    a, b = np.sum(u.values * h.values), np.sum(f.values * v.values)
    assert abs(a - b) / (np.linalg.norm(f.values) * np.linalg.norm(h.values)) <= 1e-6


def test_positivity_implicit():
    A = gallery_field("log_vortex", {"eps": 2.0}, G)
    f = ScalarField.delta(G, (3, 11))
    cfg = SolveConfig.default(G, A.lam, 0.02, dt=G.h**2 * A.lam / 4, method="direct")
    tr = solve_cauchy(f, A, 0.0, replace_every(cfg))
    assert min(s.values.min() for s in tr.snapshots) >= -1e-10


def replace_every(cfg):
    from dataclasses import replace

    return replace(cfg, snapshot_every=1)


def test_backward_equals_forward_without_skew():
    A = gallery_field("anisotropic", {"amp": 0.3}, G)
    f = random_fourier_field(G, member_rng(2, 0))
    cfg = _cfg(G, A.lam, method="direct")
    np.testing.assert_allclose(solve_backward(f, A, cfg.T, cfg).final.values,
                               solve_cauchy(f, A, 0.0, cfg).final.values, rtol=1e-10, atol=1e-12)


def test_backward_keeps_constants():
    A = gallery_field("log_vortex", {}, G)
    v = solve_backward(ScalarField.constant(G, 2.0), A, 0.01, _cfg(G)).final
    np.testing.assert_allclose(v.values, 2.0, rtol=1e-10)


def test_fourier_mode_decay():
    L, N = 1.0, 64
    g = Grid(1, N, L)
    f = ScalarField.from_function(g, lambda x: np.cos(2 * np.pi * x / L))
    T = 0.01
    cfg = SolveConfig(dt=g.h**2, T=T, theta=1.0, method="direct")
    tr = solve_cauchy(f, gallery_field("identity", {}, g), 0.0, cfg)
    expect = math.exp(-((2 * np.pi / L) ** 2) * T) * norms(f).l2
    assert norms(tr.final).l2 == pytest.approx(expect, rel=0.01)


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_identity_matches_fft_oracle(theta):
    g = Grid(2, 16, 1.0)
    f = random_fourier_field(g, member_rng(11, 0), kmax=6, decay=0.5)
    cfg = SolveConfig(dt=1 / 1024, T=20 / 1024, theta=theta, method="direct")
    tr = solve_cauchy(f, gallery_field("identity", {}, g), 0.0, cfg)
    exact = theta_heat_evolution(f.values, g.h, 20 / 1024, 1 / 1024, theta)
    np.testing.assert_allclose(tr.final.values, exact, atol=1e-11 * np.abs(f.values).max())


@pytest.mark.parametrize("method", ["bicgstab", "gmres", "direct"])
def test_linear_solvers_agree(method):
    A = gallery_field("log_vortex", {}, G)
    f = random_fourier_field(G, member_rng(1, 0))
    ref = solve_cauchy(f, A, 0.0, _cfg(G, method="direct")).final.values
    out = solve_cauchy(f, A, 0.0, _cfg(G, method=method)).final.values
    np.testing.assert_allclose(out, ref, atol=1e-9 * np.abs(ref).max())


def test_krylov_failure_is_reported():
    A = gallery_field("log_vortex", {"eps": 2.0}, Grid(2, 32))
    f = random_fourier_field(A.grid, member_rng(1, 0))
    cfg = SolveConfig(dt=0.01, T=0.01, method="gmres", max_iter=1, linear_tol=1e-14)
    with pytest.raises(SolverError):
        solve_cauchy(f, A, 0.0, cfg)


def test_step_times_hit_breakpoints():
    t = step_times(0.0, 1.0, 0.3, [0.5])
    assert t[0] == 0.0 and t[-1] == 1.0 and 0.5 in t
    assert np.all(np.diff(t) <= 0.3 + 1e-12)


def test_snapshots_and_csv(tmp_path):
    A = gallery_field("smooth_skew", {}, G)
    f = random_fourier_field(G, member_rng(0, 0))
    tr = solve_cauchy(f, A, 0.0, _cfg(G, T=0.01), save_at=[0.005])
    assert tr.snapshot_at(0.005).values.shape == G.shape
    with pytest.raises(KeyError):
        tr.snapshot_at(0.0033)
    tr.to_csv(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "time,l2,dissipation,skew_residual"
    assert len(lines) == len(tr.step_times)


def test_mollified_convergence_smooth_and_zero():
    g = Grid(2, 64)
    cfg = SolveConfig(dt=1 / 4096, T=0.005, method="direct")
    f = random_fourier_field(g, member_rng(0, 0))
    rep = mollified_convergence_check(gallery_field("identity", {}, g), f, cfg, (1, 2))
    assert max(rep.gaps) <= 2 * cfg.linear_tol * norms(f).l2 + 1e-13
    rep = mollified_convergence_check(gallery_field("log_vortex", {}, g), ScalarField.constant(g, 0.0), cfg, (1, 2))
    assert rep.gaps == (0.0,)


def test_mollified_convergence_log_vortex():
    g = Grid(2, 128)
    cfg = SolveConfig(dt=1 / 4096, T=0.01, method="direct")
    f = random_fourier_field(g, member_rng(0, 0))
    rep = mollified_convergence_check(gallery_field("log_vortex", {}, g), f, cfg, (1, 2, 3))
    assert rep.decreasing
    with pytest.raises(ValueError):
        mollified_convergence_check(gallery_field("log_vortex", {}, g), f, cfg, (2, 1))
