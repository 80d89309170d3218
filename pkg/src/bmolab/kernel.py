"""Tabulated fundamental solutions and the kernel identities built on them.

A kernel column ``x -> Gamma(x, t; xi, tau)`` is the forward evolution of the
grid delta ``h^-n 1_{cell(xi)}``. Because every backward step is the exact
transpose of the matching forward step, ``xi -> Gamma(x, t; xi, tau)`` is the
backward evolution of the delta at ``x`` over the same step grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bmo import frame_bmo_norm
from .gallery import CoefficientField
from .grid import Grid, ScalarField
from .io import heatmap_svg, write_csv
from .solver import SolveConfig, propagate, step_times

BURN_IN_FACTOR = 4.0


def burn_in(grid: Grid, lam: float) -> float:
    """Minimum ``t - tau`` before a delta is considered resolved."""
    return BURN_IN_FACTOR * grid.h**2 / lam


def _delta_columns(grid: Grid, cells) -> np.ndarray:
    U = np.zeros((grid.size, len(cells)))
    flat = [np.ravel_multi_index(c, grid.shape) for c in cells]
    U[flat, np.arange(len(cells))] = 1.0 / grid.cell_volume
    return U


def _normalize_sources(grid: Grid, sources) -> tuple[tuple[int, ...], ...]:
    if isinstance(sources, str):
        if sources != "all":
            raise ValueError(f"unrecognized sources {sources!r}")
        return tuple(np.ndindex(grid.shape))
    cells = tuple(grid.wrap(s) for s in sources)
    if not cells:
        raise ValueError("need at least one source cell")
    return cells


@dataclass
class KernelTable:
    """``values[k, j]`` is ``x -> Gamma(x, slices[k]; sources[j], tau)``."""

    grid: Grid
    sources: tuple[tuple[int, ...], ...]
    tau: float
    slices: np.ndarray
    values: np.ndarray = field(repr=False)
    coef: CoefficientField = field(repr=False)
    cfg: SolveConfig = field(repr=False)

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def descriptor(self) -> dict:
        return {"name": self.coef.name, "params": self.coef.params, "lambda": self.coef.lam}

    def slice_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.slices - t)))
        if abs(self.slices[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not a tabulated slice")
        return k

    def column(self, k: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.values[k, j])

    def source_points(self) -> np.ndarray:
        return np.array([self.grid.point(s) for s in self.sources])

    @property
    def all_sources(self) -> bool:
        return len(set(self.sources)) == self.grid.size

    def matrix(self, k: int) -> np.ndarray:
        """``(cells, sources)`` view of one slice."""
        return self.values[k].reshape(len(self.sources), -1).T

    def to_csv(self, directory, prefix: str = "kernel") -> list[Path]:
        out = []
        d = Path(directory)
        for k, t in enumerate(self.slices):
            rows = []
            for j, s in enumerate(self.sources):
                col = self.values[k, j]
                for idx in np.ndindex(self.grid.shape):
                    rows.append([*idx, *s, float(col[idx])])
            header = [f"x{i}" for i in range(self.grid.dim)] + [f"xi{i}" for i in range(self.grid.dim)]
            out.append(write_csv(d / f"{prefix}_slice{k:03d}.csv", header + ["value"], rows))
        return out

    def heatmap(self, path, k: int = -1, j: int = 0) -> Path:
        col = self.values[k, j]
        t = float(self.slices[k])
        return heatmap_svg(col, path, title=f"kernel t={t:g}, source {self.sources[j]}", xlabel="x0")


def kernel_table(A: CoefficientField, sources, tau: float, slices, cfg: SolveConfig) -> KernelTable:
    """Tabulate kernel columns for every source at the requested slice times."""
    grid = A.grid
    cells = _normalize_sources(grid, sources)
    slices = np.array(sorted(float(s) for s in np.atleast_1d(slices)))
    if len(slices) == 0:
        raise ValueError("need at least one slice")
    b = burn_in(grid, A.lam)
    if slices[0] - tau < b * (1 - 1e-9):
        raise ValueError(f"slice {slices[0]} is before the burn-in time tau + {b:.3g}")
    times = step_times(tau, slices[-1], cfg.dt, slices)
    U = _delta_columns(grid, cells)
    out = np.empty((len(slices), len(cells)) + grid.shape)
    want = {round(float(s), 12): k for k, s in enumerate(slices)}
    for t, U in propagate(U, A, times, cfg):
        k = want.get(round(float(t), 12))
        if k is not None:
            out[k] = U.T.reshape((len(cells),) + grid.shape)
    return KernelTable(grid, cells, float(tau), slices, out, A, cfg)


def backward_columns(A: CoefficientField, points, t0: float, t1: float, cfg: SolveConfig, breakpoints=()):
    """Columns ``xi -> Gamma(x_m, t1; xi, t0)`` for each cell ``x_m`` in ``points``."""
    grid = A.grid
    cells = _normalize_sources(grid, points)
    times = step_times(t0, t1, cfg.dt, breakpoints)[::-1]
    V = _delta_columns(grid, cells)
    for _, V in propagate(V, A, times, cfg, adjoint=True):
        pass
    return V


def marginal_mass(K: KernelTable, direction: str = "over_x", points=None) -> np.ndarray:
    """``h^n`` sums of the kernel over ``x`` (per slice and source) or over ``xi``.

    ``over_xi`` sums the table directly when it holds every cell as a source;
    otherwise it uses backward solves from deltas at ``points`` (default: the
    source cells). Returns an array ``(slices, sources or points)``.
    """
    hv = K.grid.cell_volume
    axes = tuple(range(2, 2 + K.grid.dim))
    if direction == "over_x":
        return hv * K.values.sum(axis=axes)
    if direction != "over_xi":
        raise ValueError("direction must be 'over_x' or 'over_xi'")
    if points is None and K.all_sources:
        order = np.argsort([np.ravel_multi_index(s, K.grid.shape) for s in K.sources])
        return np.array([hv * K.matrix(k)[:, order].sum(axis=1) for k in range(len(K.slices))])
    pts = K.sources if points is None else points
    out = []
    for t in K.slices:
        V = backward_columns(K.coef, pts, K.tau, float(t), K.cfg, K.slices)
        out.append(hv * V.sum(axis=0))
    return np.array(out)


@dataclass(frozen=True)
class CKReport:
    s: float
    t: float
    errors: tuple[float, ...]
    mode: str

    @property
    def max_error(self) -> float:
        return max(self.errors)


def ck_compose_check(K: KernelTable, s: float, t: float | None = None, leg_dt: float | None = None, mode="operator") -> CKReport:
    """L1-in-x error between ``Gamma(., t; xi, tau)`` and its composition through ``s``.

    ``mode="operator"`` applies the ``s -> t`` kernel as an evolution of the
    tabulated slice at ``s`` (optionally with a different step ``leg_dt``);
    ``mode="explicit"`` forms the full ``s -> t`` kernel matrix and sums
    ``h^n sum_z Gamma(x, t; z, s) Gamma(z, s; xi, tau)`` (small grids only).
    """
    t = float(K.slices[-1]) if t is None else float(t)
    ks, kt = K.slice_index(s), K.slice_index(t)
    if not K.tau < s < t:
        raise ValueError("need tau < s < t")
    grid = K.grid
    hv = grid.cell_volume
    cfg = K.cfg if leg_dt is None else replace(K.cfg, dt=leg_dt)
    between = [x for x in K.slices if s < x < t]
    Us = K.matrix(ks)
    if mode == "operator":
        times = step_times(s, t, cfg.dt, between)
        for _, Us in propagate(Us, K.coef, times, cfg):
            pass
        rhs = Us
    elif mode == "explicit":
        if grid.size > 4096:
            raise ValueError("explicit composition is limited to grids with at most 4096 cells")
        G = _delta_columns(grid, list(np.ndindex(grid.shape)))
        for _, G in propagate(G, K.coef, step_times(s, t, cfg.dt, between), cfg):
            pass
        rhs = hv * (G @ Us)
    else:
        raise ValueError("mode must be 'operator' or 'explicit'")
    lhs = K.matrix(kt)
    err = hv * np.abs(lhs - rhs).sum(axis=0)
    return CKReport(s, t, tuple(float(e) for e in err), mode)


class TwistOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class DaviesTwist:
    """Linear weight ``psi(x) = alpha . (x - origin)`` on a bounded window."""

    alpha: tuple[float, ...]
    cap: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in np.atleast_1d(self.alpha)))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.alpha))

    def psi(self, grid: Grid, origin) -> np.ndarray:
        if len(self.alpha) != grid.dim:
            raise ValueError("alpha has the wrong dimension")
        reach = self.norm * grid.length / 2 * math.sqrt(grid.dim)
        if reach > self.cap:
            raise TwistOverflowError(f"|alpha| * window = {reach:.3g} exceeds the cap {self.cap}")
        d = grid.displacement(origin)
        return sum(a * c for a, c in zip(self.alpha, d))


def _window(A: CoefficientField):
    """Coefficients on the doubled torus and the index offset of the original copy."""
    big = A.tiled(2)
    return big, A.grid.cells


def _embed(f: ScalarField, big: Grid, offset: int) -> np.ndarray:
    v = np.zeros(big.shape)
    sl = tuple(slice(offset, offset + f.grid.cells) for _ in range(f.grid.dim))
    v[sl] = f.values
    return v


@dataclass
class TwistedEvolution:
    field: ScalarField
    window: tuple
    diagnostic: float
    alpha: tuple[float, ...]
    elapsed: float
    lam: float

    def cropped(self) -> np.ndarray:
        """Values on the original box."""
        return self.field.values[self.window] if self.window else self.field.values


def davies_twist_apply(
    A: CoefficientField, twist: DaviesTwist, f: ScalarField, tau: float, t: float, cfg: SolveConfig, window=True
) -> TwistedEvolution:
    """``e^-psi Gamma_{tau,t} (e^psi f)`` and the ultracontractivity diagnostic
    ``||.||_inf (t - tau)^(n/4) / ||f||_2``.

    With ``window=True`` the field is placed in a doubled box (zero outside,
    coefficients tiled) and ``psi`` is centered on the original box.
    """
    grid = f.grid
    if window:
        Abig, off = _window(A)
        g2 = Abig.grid
        v = _embed(f, g2, off)
        origin = np.full(grid.dim, (off + (grid.cells - 1) / 2) * grid.h)
        sl = tuple(slice(off, off + grid.cells) for _ in range(grid.dim))
    else:
        Abig, g2, v, sl = A, grid, f.values, ()
        origin = np.full(grid.dim, (grid.cells - 1) / 2 * grid.h)
    psi = twist.psi(g2, origin)
    times = step_times(tau, t, cfg.dt)
    U = (np.exp(psi) * v).ravel()
    for _, U in propagate(U, Abig, times, cfg):
        pass
    out = np.exp(-psi) * U.reshape(g2.shape)
    f2 = math.sqrt(grid.cell_volume * float(np.sum(f.values**2)))
    diag = float(np.abs(out).max()) * (t - tau) ** (grid.dim / 4) / f2 if f2 > 0 else 0.0
    return TwistedEvolution(ScalarField(g2, out), sl, diag, twist.alpha, t - tau, A.lam)


def twisted_kernel(K: KernelTable, twist: DaviesTwist, origin=None) -> np.ndarray:
    """Pointwise ``e^-psi(x) Gamma(x, t; xi, tau) e^psi(xi)`` over the whole table."""
    grid = K.grid
    origin = np.full(grid.dim, (grid.cells - 1) / 2 * grid.h) if origin is None else origin
    psi = twist.psi(grid, origin)
    w = np.array([np.exp(psi[s]) for s in K.sources])
    shape = (1, len(w)) + (1,) * grid.dim
    return np.exp(-psi)[None, None] * K.values * w.reshape(shape)


def twisted_mass(A: CoefficientField, alpha, x, t: float, cfg: SolveConfig, tau: float = 0.0) -> float:
    """``h^n sum_xi e^{alpha.(xi - x)} Gamma(x, t; xi, tau)`` on the doubled window."""
    grid = A.grid
    Abig, off = _window(A)
    g2 = Abig.grid
    xc = tuple(int(c) + off for c in grid.wrap(x))
    twist = DaviesTwist(alpha)
    psi = twist.psi(g2, g2.point(xc))
    V = backward_columns(Abig, [xc], tau, t, cfg)[:, 0]
    return float(g2.cell_volume * np.sum(np.exp(psi.ravel()) * V))


@dataclass(frozen=True)
class TwistFit:
    c: float
    log_C: float
    per_group: dict
    residual: float

    @property
    def spread(self) -> float:
        vals = [v for v in self.per_group.values() if np.isfinite(v)]
        return max(vals) - min(vals) if vals else 0.0


def fit_twist_constant(records) -> TwistFit:
    """Fit ``log D = log C + c |alpha|^2 (t - tau) / lam`` over a run family.

    ``records`` holds ``(group, TwistedEvolution)`` pairs. ``c`` comes from a
    least-squares fit; ``log C`` is then raised so the fitted curve is an
    upper envelope of every record.
    """
    recs = list(records)
    X = np.array([sum(a * a for a in r.alpha) * r.elapsed / r.lam for _, r in recs])
    Y = np.log([max(r.diagnostic, 1e-300) for _, r in recs])
    if np.ptp(X) == 0:
        raise ValueError("need at least two distinct |alpha|^2 (t - tau) values")
    M = np.column_stack([np.ones_like(X), X])
    (a0, c), *_ = np.linalg.lstsq(M, Y, rcond=None)
    log_C = float(np.max(Y - c * X))
    groups = {}
    for name in dict.fromkeys(g for g, _ in recs):
        idx = [i for i, (g, _) in enumerate(recs) if g == name]
        if np.ptp(X[idx]) > 0:
            groups[name] = float(np.polyfit(X[idx], Y[idx], 1)[0])
    resid = float(np.max(np.abs(Y - a0 - c * X)))
    return TwistFit(float(c), log_C, groups, resid)


def _block_average(v: np.ndarray, r: int, shift: int) -> np.ndarray:
    """Mean over blocks ``r k + shift + [0, r)`` along every leading axis."""
    nd = v.ndim
    w = v
    for ax in range(nd):
        w = np.roll(w, -shift, axis=ax)
    shape = []
    for s in w.shape:
        shape += [s // r, r]
    return w.reshape(shape).mean(axis=tuple(range(1, 2 * nd, 2)))


def _block_average_matrix(A: np.ndarray, r: int, shift: int, dim: int) -> np.ndarray:
    out = None
    for i in range(dim):
        for j in range(dim):
            m = _block_average(A[..., i, j], r, shift)
            if out is None:
                out = np.empty(m.shape + (dim, dim))
            out[..., i, j] = m
    return out


def rescaled_field(A: CoefficientField, r: int, shift: int = 0) -> CoefficientField:
    """``A_{r,z}(x, t) = A(r x + z, r^2 t)`` on the torus of length ``L/r``.

    The coarse grid keeps the spacing ``h``; each coarse cell averages the
    ``r^n`` fine cells it maps onto, and ``z = (shift + (r - 1)/2) h`` aligns
    the block centers.
    """
    g = A.grid
    if r < 1 or r & (r - 1) or g.cells % r:
        raise ValueError(f"r must be a power of 2 dividing N, got {r}")
    coarse = Grid(g.dim, g.cells // r, g.length / r)
    fn = lambda t: _block_average_matrix(A.frame(r * r * t).A, r, shift, g.dim)  # noqa: E731
    return A.derive(fn, grid=coarse, name=f"{A.name}@r={r}")


@dataclass(frozen=True)
class ScalingReport:
    r: int
    z: float
    t: float
    error: float
    bmo_original: float
    bmo_rescaled: float

    @property
    def bmo_ratio(self) -> float:
        if self.bmo_original == 0.0:
            return 1.0 if self.bmo_rescaled == 0.0 else math.inf
        return self.bmo_rescaled / self.bmo_original


def scaling_check(
    A: CoefficientField, r: int, shift: int = 0, t: float | None = None, cfg: SolveConfig | None = None, source=None
) -> ScalingReport:
    """Compare ``Gamma(r x + z, r^2 t; r xi + z, 0)`` with ``r^-n Gamma^{A_{r,z}}(x, t; xi, 0)``.

    Reports the sup-norm error relative to the peak of the rescaled kernel,
    and the BMO norms of the skew parts of ``A`` and ``A_{r,z}``.
    """
    g = A.grid
    Ars = rescaled_field(A, r, shift)
    gc = Ars.grid
    if t is None:
        t = (gc.length / 8) ** 2 / 2
    if cfg is None:
        cfg = SolveConfig.default(gc, A.lam, t)
    src = gc.wrap(source if source is not None else (gc.cells // 2,) * g.dim)
    # coarse side
    Uc = _delta_columns(gc, [src])[:, 0]
    for _, Uc in propagate(Uc, Ars, step_times(0.0, t, cfg.dt), replace(cfg, T=t)):
        pass
    coarse = Uc.reshape(gc.shape)
    # fine side: the coarse delta maps to uniform mass on its r^n image cells
    uf = np.zeros(g.shape)
    sl = tuple(slice(r * s + shift, r * s + shift + r) for s in src)
    idx = np.ix_(*[np.arange(s.start, s.stop) % g.cells for s in sl])
    uf[idx] = 1.0 / (r**g.dim * g.cell_volume)
    Tf = r * r * t
    Uf = uf.ravel()
    for _, Uf in propagate(Uf, A, step_times(0.0, Tf, cfg.dt), replace(cfg, T=Tf)):
        pass
    fine = r**g.dim * _block_average(Uf.reshape(g.shape), r, shift)
    err = float(np.abs(fine - coarse).max() / np.abs(coarse).max())
    bmo_a = _skew_bmo(A, 0.0)
    bmo_r = _skew_bmo(Ars, 0.0)
    z = (shift + (r - 1) / 2) * g.h
    return ScalingReport(r, z, float(t), err, bmo_a, bmo_r)


def _skew_bmo(A: CoefficientField, t: float) -> float:
    if A.grid.dim < 2:
        return 0.0
    return frame_bmo_norm(A.frame(t))
