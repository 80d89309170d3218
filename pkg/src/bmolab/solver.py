"""Conservative theta-scheme for ``du/dt = div(A grad u)`` and its adjoint.

Operator layout (``Op = S + X + K``):

* ``S = -sum_i D_i^T diag(a^{ii} on faces) D_i`` (negative semidefinite),
* ``X`` the symmetrized cross terms ``a^{ij}, i != j`` with transverse
  gradients averaged to the face (zero for diagonal ``a``),
* ``K = sum_j (V_j S_j - (V_j S_j)^T)`` with ``V_j`` the face drift from
  :func:`bmolab.gallery.skew_edge_velocity` over ``2h``.

``K`` is antisymmetric by construction, so the skew part does no work in
the discrete ``L^2`` pairing, and ``K 1 = 0`` because the face drift is
discretely divergence-free. Every row and column of ``Op`` sums to zero,
hence mass is conserved and constants are stationary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bmo import mollify_coefficients
from .gallery import CoefficientField, MatrixFieldFrame, skew_edge_velocity
from .grid import Grid, ScalarField, norms
from .io import write_csv


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""


@dataclass(frozen=True)
class SolveConfig:
    dt: float
    T: float
    theta: float = 1.0
    linear_tol: float = 1e-12
    max_iter: int = 2000
    method: str = "bicgstab"
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.dt > self.T * (1 + 1e-12):
            raise ValueError("dt must not exceed T")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if not self.linear_tol > 0:
            raise ValueError("linear_tol must be positive")
        if self.method not in ("bicgstab", "gmres", "direct"):
            raise ValueError(f"unknown linear solver {self.method!r}")

    @classmethod
    def default(cls, grid: Grid, lam: float, T: float, **kw) -> "SolveConfig":
        """``dt = h^2 lam / 4`` unless given."""
        dt = kw.pop("dt", grid.h**2 * lam / 4)
        return cls(dt=min(dt, T), T=T, **kw)


@lru_cache(maxsize=16)
def _shift(grid: Grid, axis: int) -> sp.csr_matrix:
    """``(S u)(c) = u(c + e_axis)`` on the flattened C-order grid."""
    N = grid.cells
    P = sp.csr_matrix((np.ones(N), (np.arange(N), (np.arange(N) + 1) % N)), shape=(N, N))
    mats = [sp.identity(N, format="csr")] * grid.dim
    mats[axis] = P
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _diag(v: np.ndarray) -> sp.dia_matrix:
    return sp.diags(v.ravel())


@dataclass
class StepOperator:
    """Assembled pieces for one frame and step size."""

    grid: Grid
    op: sp.csr_matrix
    sym: sp.csr_matrix
    skew: sp.csr_matrix
    dt: float
    theta: float
    lhs: sp.csr_matrix = field(init=False)
    rhs: sp.csr_matrix = field(init=False)
    _lu: object = field(default=None, init=False, repr=False)
    _jacobi: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        I = sp.identity(self.grid.size, format="csr")
        self.lhs = (I - self.theta * self.dt * self.op).tocsr()
        self.rhs = (I + (1 - self.theta) * self.dt * self.op).tocsr()

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.lhs.tocsc(), permc_spec="MMD_AT_PLUS_A")
        return self._lu

    @property
    def jacobi(self):
        if self._jacobi is None:
            d = 1.0 / self.lhs.diagonal()
            self._jacobi = spla.LinearOperator(self.lhs.shape, matvec=lambda x: d * x.ravel(), dtype=float)
        return self._jacobi


def assemble_operator(frame: MatrixFieldFrame) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Return ``(Op, symmetric part, skew part)`` as sparse matrices."""
    g = frame.grid
    n = g.dim
    h = g.h
    a = frame.a
    size = g.size
    I = sp.identity(size, format="csr")
    sym = sp.csr_matrix((size, size))
    cross = sp.csr_matrix((size, size))
    for i in range(n):
        Si = _shift(g, i)
        Di = (Si - I) / h
        aii = a[..., i, i]
        af = 0.5 * (aii + np.roll(aii, -1, i))
        sym = sym - Di.T @ _diag(af) @ Di
        for j in range(n):
            if j == i:
                continue
            aij = a[..., i, j]
            if not np.any(aij):
                continue
            Sj = _shift(g, j)
            Cj = (Sj - Sj.T) / (2 * h)
            Tij = 0.5 * (I + Si) @ Cj
            af = 0.5 * (aij + np.roll(aij, -1, i))
            cross = cross - Di.T @ _diag(af) @ Tij
    sym = (sym + 0.5 * (cross + cross.T)).tocsr()
    skew = sp.csr_matrix((size, size))
    if n > 1 and np.any(frame.b):
        v = skew_edge_velocity(frame)
        for j in range(n):
            Wj = _diag(v[j] / (2 * h)) @ _shift(g, j)
            skew = skew + Wj - Wj.T
    skew = skew.tocsr()
    return (sym + skew).tocsr(), sym, skew


def assemble_step_operator(
    frame: MatrixFieldFrame, dt: float, theta: float = 1.0, lam: float | None = None
) -> StepOperator:
    """Assemble ``I - theta dt Op`` and ``I + (1 - theta) dt Op`` for one frame."""
    if lam is not None:
        frame.check_ellipticity(lam)
    op, sym, skew = assemble_operator(frame)
    return StepOperator(frame.grid, op, sym, skew, dt, theta)


class _OperatorCache:
    """Reuses assembled operators for stationary fields."""

    def __init__(self, coef: CoefficientField, theta: float, adjoint: bool = False):
        self.coef = coef.transpose() if adjoint else coef
        self.theta = theta
        self._store: dict = {}

    def get(self, t_mid: float, dt: float) -> StepOperator:
        # steps within one segment differ only by rounding; share their operator
        dt = float(f"{dt:.10g}")
        key = (0.0 if self.coef.stationary else t_mid, dt)
        so = self._store.get(key)
        if so is None:
            if len(self._store) > 8:
                self._store.clear()
            frame = self.coef.frame(t_mid)
            base = None
            for (tk, _), other in self._store.items():
                if tk == key[0]:
                    base = other
                    break
            if base is not None:
                so = StepOperator(base.grid, base.op, base.sym, base.skew, dt, self.theta)
            else:
                so = assemble_step_operator(frame, dt, self.theta, self.coef.lam)
            self._store[key] = so
        return so


def _solve(so: StepOperator, b: np.ndarray, x0: np.ndarray | None, cfg: SolveConfig) -> np.ndarray:
    """Solve ``lhs x = b`` column by column to ``||r|| <= tol ||b||``."""
    if b.ndim == 2 and cfg.method == "direct":
        x = so.lu.solve(b)
        _check_residual(so, b, x, cfg)
        return x
    if b.ndim == 2:
        return np.column_stack(
            [_solve(so, b[:, k], None if x0 is None else x0[:, k], cfg) for k in range(b.shape[1])]
        )
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return np.zeros_like(b)
    if cfg.method == "direct":
        x = so.lu.solve(b)
    else:
        krylov = spla.bicgstab if cfg.method == "bicgstab" else spla.gmres
        x = x0
        used = 0
        while True:
            budget = cfg.max_iter - used
            if budget <= 0:
                raise SolverError(
                    f"{cfg.method} did not reach rtol={cfg.linear_tol:g} within {cfg.max_iter} iterations"
                )
            x, info = krylov(so.lhs, b, x0=x, rtol=cfg.linear_tol, atol=0.0, maxiter=budget, M=so.jacobi)
            used += budget if info > 0 else max(1, budget // 4)
            if info < 0:
                raise SolverError(f"{cfg.method} breakdown (info={info})")
            res = np.linalg.norm(so.lhs @ x - b)
            if res <= cfg.linear_tol * bn * (1 + 1e-6):
                break
    _check_residual(so, b, x, cfg)
    return x


def _check_residual(so, b, x, cfg):
    res = np.linalg.norm(so.lhs @ x - b, axis=0)
    bn = np.linalg.norm(b, axis=0)
    # direct solves are judged at roundoff level relative to the operator scale
    slack = 1e3 if cfg.method == "direct" else 1.0 + 1e-6
    bad = res > np.maximum(cfg.linear_tol * bn * slack, 1e-300)
    if np.any(bad):
        raise SolverError(f"residual {res.max():.3g} above linear_tol * ||rhs|| = {cfg.linear_tol * bn.max():.3g}")


def step(u: ScalarField, frame: MatrixFieldFrame, cfg: SolveConfig, lam: float | None = None) -> ScalarField:
    """One theta-step ``(I - th dt Op) u+ = (I + (1-th) dt Op) u``."""
    so = assemble_step_operator(frame, cfg.dt, cfg.theta, lam)
    x = _solve(so, so.rhs @ u.values.ravel(), u.values.ravel(), cfg)
    return ScalarField(u.grid, x)


def step_times(t0: float, t1: float, dt: float, breakpoints=()) -> np.ndarray:
    """Step grid from ``t0`` to ``t1`` that lands exactly on every breakpoint."""
    pts = sorted({float(t0), float(t1), *(float(b) for b in breakpoints if t0 < b < t1)})
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, math.ceil((b - a) / dt * (1 - 1e-12)))
        out.extend(a + (b - a) * np.arange(1, m + 1) / m)
        out[-1] = b
    return np.asarray(out)


def propagate(U0: np.ndarray, coef: CoefficientField, times: np.ndarray, cfg: SolveConfig, adjoint=False):
    """March columns of ``U0`` over ``times`` (increasing for forward,
    decreasing for adjoint). Yields ``(t, U)`` after each step."""
    cache = _OperatorCache(coef, cfg.theta, adjoint=adjoint)
    U = U0
    for ta, tb in zip(times[:-1], times[1:]):
        dt = abs(tb - ta)
        so = cache.get(0.5 * (ta + tb), dt)
        if not adjoint:
            U = _solve(so, so.rhs @ U, U, cfg)
        else:
            y = _solve(so, U, U, cfg)
            U = so.rhs @ y
        yield tb, U


@dataclass
class SolutionTrace:
    grid: Grid
    times: list
    snapshots: list
    step_times: np.ndarray
    l2sq: np.ndarray
    dissipation: np.ndarray
    skew: np.ndarray
    grad_sq: np.ndarray
    initial_l2sq: float
    lam: float

    def snapshot_at(self, t: float) -> ScalarField:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[i]

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    def energy_balance(self) -> tuple[float, float]:
        """``(||u(T)||^2 + 2 lam sum dt ||grad u||^2, ||f||^2)``."""
        dts = np.abs(np.diff(self.step_times))
        lhs = self.l2sq[-1] + 2 * self.lam * float(np.sum(dts * self.grad_sq))
        return float(lhs), float(self.initial_l2sq)

    def to_csv(self, path) -> None:
        rows = zip(self.step_times[1:], np.sqrt(self.l2sq), self.dissipation, self.skew)
        write_csv(path, ["time", "l2", "dissipation", "skew_residual"], rows)


def _ledger(so: StepOperator, u: np.ndarray, grid: Grid):
    hv = grid.cell_volume
    l2sq = hv * float(u @ u)
    diss = -hv * float(u @ (so.sym @ u))
    skew = hv * float(u @ (so.skew @ u))
    return l2sq, diss, skew


def solve_cauchy(
    f: ScalarField, A: CoefficientField, tau: float, cfg: SolveConfig, save_at=()
) -> SolutionTrace:
    """Forward solve from ``tau`` to ``tau + T`` with the energy ledger."""
    grid = f.grid
    times = step_times(tau, tau + cfg.T, cfg.dt, save_at)
    cache = _OperatorCache(A, cfg.theta)
    u = f.values.ravel().copy()
    save = {round(float(s), 12) for s in save_at}
    snaps_t, snaps = [tau], [f]
    l2, di, sk, gs = [], [], [], []
    for k, (ta, tb) in enumerate(zip(times[:-1], times[1:]), start=1):
        so = cache.get(0.5 * (ta + tb), tb - ta)
        u = _solve(so, so.rhs @ u, u, cfg)
        a, d, s = _ledger(so, u, grid)
        l2.append(a)
        di.append(d)
        sk.append(s)
        uf = ScalarField(grid, u)
        gs.append(norms(uf).h1_seminorm ** 2)
        keep = k == len(times) - 1 or round(float(tb), 12) in save
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            keep = True
        if keep:
            snaps_t.append(float(tb))
            snaps.append(uf)
    f0 = f.values.ravel()
    return SolutionTrace(
        grid, snaps_t, snaps, times, np.array(l2), np.array(di), np.array(sk), np.array(gs),
        grid.cell_volume * float(f0 @ f0), A.lam,
    )


def solve_backward(
    g: ScalarField, A: CoefficientField, T: float, cfg: SolveConfig, t0: float = 0.0, save_at=()
) -> SolutionTrace:
    """Adjoint solve (coefficients ``A^T = a - b``) from ``t0 + T`` back to ``t0``.

    Uses the same step grid as :func:`solve_cauchy` over ``[t0, t0 + T]`` and
    the exact transpose of each forward step, so forward/backward pairings
    agree up to the linear-solver tolerance.
    """
    grid = g.grid
    times = step_times(t0, t0 + T, cfg.dt, save_at)[::-1]
    save = {round(float(s), 12) for s in save_at}
    cache = _OperatorCache(A, cfg.theta, adjoint=True)
    v = g.values.ravel().copy()
    snaps_t, snaps = [t0 + T], [g]
    l2, di, sk, gs = [], [], [], []
    for k, (tb, ta) in enumerate(zip(times[:-1], times[1:]), start=1):
        so = cache.get(0.5 * (ta + tb), tb - ta)
        v = so.rhs @ _solve(so, v, v, cfg)
        a, d, s = _ledger(so, v, grid)
        l2.append(a)
        di.append(d)
        sk.append(s)
        vf = ScalarField(grid, v)
        gs.append(norms(vf).h1_seminorm ** 2)
        keep = k == len(times) - 1 or round(float(ta), 12) in save
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            keep = True
        if keep:
            snaps_t.append(float(ta))
            snaps.append(vf)
    g0 = g.values.ravel()
    return SolutionTrace(
        grid, snaps_t, snaps, times, np.array(l2), np.array(di), np.array(sk), np.array(gs),
        grid.cell_volume * float(g0 @ g0), A.lam,
    )


@dataclass(frozen=True)
class MollifiedConvergenceReport:
    m_list: tuple[int, ...]
    epsilons: tuple[float, ...]
    gaps: tuple[float, ...]

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.gaps[:-1], self.gaps[1:]))


def mollified_convergence_check(
    A: CoefficientField, f: ScalarField, cfg: SolveConfig, m_list=(1, 2, 3)
) -> MollifiedConvergenceReport:
    """Solve with coefficients mollified at ``eps_m = 2^-m L/8`` and report
    ``max_t ||u_m(t) - u_m'(t)||_2`` for consecutive ``m``."""
    m_list = tuple(int(m) for m in m_list)
    if any(b <= a for a, b in zip(m_list[:-1], m_list[1:])):
        raise ValueError("m_list must be increasing")
    L = A.grid.length
    eps = tuple(2.0**-m * L / 8 for m in m_list)
    cfg = replace(cfg, snapshot_every=cfg.snapshot_every or 1)
    runs = []
    for e in eps:
        tr = solve_cauchy(f, mollify_coefficients(A, e), 0.0, cfg)
        runs.append(np.array([s.values for s in tr.snapshots]))
    hv = A.grid.cell_volume
    gaps = []
    for u, w in zip(runs[:-1], runs[1:]):
        d = (u - w).reshape(len(u), -1)
        gaps.append(float(np.sqrt(hv * (d * d).sum(axis=1)).max()))
    return MollifiedConvergenceReport(m_list, eps, tuple(gaps))
