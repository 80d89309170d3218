"""Quantitative kernel estimates: two-sided Gaussian constants, Harnack
ratios, Hölder exponents, the Nash ODE lemma and the Gaussian-weighted
log-kernel functional."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .bmo import ball_mask, linf_bmo_norm
from .corpus import member_rng
from .gallery import CoefficientField
from .grid import ScalarField
from .io import write_csv
from .kernel import KernelTable, backward_columns
from .solver import SolveConfig, propagate, step_times


@dataclass(frozen=True)
class AronsonFit:
    M_upper: float
    M_lower: float
    rho_max: float
    slices: tuple[float, ...]
    points: int
    lam: float
    skew_sup: float
    bmo: float | None = None

    @property
    def M(self) -> float:
        return max(self.M_upper, self.M_lower, 1.0)

    def csv_row(self):
        return [self.M, self.M_upper, self.M_lower, self.rho_max, self.points, self.lam, self.skew_sup,
                math.nan if self.bmo is None else self.bmo]


def _bisect_log(ok, lo: float, hi: float, tol: float) -> float:
    """Smallest ``M`` in ``[lo, hi]`` with ``ok(M)`` (monotone), to relative ``tol``."""
    if not ok(hi):
        return math.inf
    if ok(lo):
        return lo
    while hi / lo > 1 + tol:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def aronson_points(K: KernelTable, rho_max: float = 16.0, t_max: float | None = None):
    """Scan ``(rho, q)`` pairs with ``rho = d^2/(t - tau)`` and ``q = Gamma (t - tau)^{n/2}``."""
    g = K.grid
    n = g.dim
    guard = (g.length / 8) ** 2 * K.coef.lam
    t_max = guard if t_max is None else min(t_max, guard)
    dists = [g.distance(g.point(s)) for s in K.sources]
    rhos, qs, used = [], [], []
    for k, t in enumerate(K.slices):
        s = t - K.tau
        if s > t_max * (1 + 1e-12):
            continue
        used.append(float(t))
        for j, d in enumerate(dists):
            rho = d * d / s
            m = rho <= rho_max * (1 + 1e-12)
            rhos.append(rho[m])
            qs.append(K.values[k, j][m] * s ** (n / 2))
    if not rhos or sum(len(r) for r in rhos) == 0:
        raise ValueError("empty Aronson scan after windowing")
    return np.concatenate(rhos), np.concatenate(qs), tuple(used)


def aronson_fit(
    K: KernelTable, rho_max: float = 16.0, t_max: float | None = None, tol: float = 1e-3, with_bmo: bool = False
) -> AronsonFit:
    """Smallest constants in ``q <= M e^{-rho/M}`` and ``q >= M^-1 e^{-M rho}`` over the scan."""
    if rho_max <= 0:
        raise ValueError("rho_max must be positive")
    rho, q, used = aronson_points(K, rho_max, t_max)
    pos = q > 0
    # only the binding points matter: for the upper bound, the largest q at each rho
    lq = np.log(np.where(pos, q, 1.0))

    def upper_ok(M):
        return bool(np.all(~pos | (math.log(M) - rho / M >= lq)))

    def lower_ok(M):
        return bool(np.all(pos & (-math.log(M) - M * rho <= lq)))

    Mu = _bisect_log(upper_ok, 1e-8, 1e8, tol)
    Ml = _bisect_log(lower_ok, 1e-8, 1e8, tol) if pos.all() else math.inf
    lam = K.coef.lam
    skew = K.coef.skew_sup() if K.grid.dim > 1 else 0.0
    bmo = linf_bmo_norm(K.coef) if with_bmo and K.grid.dim > 1 else None
    return AronsonFit(Mu, Ml, float(rho_max), used, int(rho.size), lam, skew, bmo)


def aronson_surface_svg(K: KernelTable, path, rho_max: float = 16.0):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .io import save_svg

    rho, q, _ = aronson_points(K, rho_max)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    m = q > 0
    ax.plot(rho[m], np.log(q[m]), ".", ms=1)
    ax.set_xlabel("d^2/(t-tau)")
    ax.set_ylabel("log(Gamma (t-tau)^{n/2})")
    try:
        return save_svg(fig, path)
    finally:
        plt.close(fig)


@dataclass(frozen=True)
class HarnackReport:
    R: float
    x0: tuple[float, ...]
    s: float
    sup: float
    inf: float
    flagged: bool = False

    @property
    def ratio(self) -> float:
        if self.inf <= 0.0:
            return math.inf
        return self.sup / self.inf


def harnack_ratio(
    A: CoefficientField, v: ScalarField, R: float, x0, s: float, cfg: SolveConfig, tau: float = 0.0
) -> HarnackReport:
    """sup over ``[s, s+R^2] x B(x0,R)`` and inf over ``[s+3R^2, s+4R^2] x B(x0,R)``
    of the evolution of ``v`` started at ``tau``, sampled at every step time."""
    g = A.grid
    if np.any(v.values < 0) or not np.any(v.values):
        raise ValueError("v must be nonnegative and not identically zero")
    if not g.h <= R <= g.length / 4:
        raise ValueError("R must lie in [h, L/4] so the ball fits inside the torus")
    if s < tau:
        raise ValueError("s must not precede tau")
    mask = ball_mask(g, x0, R).ravel()
    edges = [s, s + R * R, s + 3 * R * R, s + 4 * R * R]
    times = step_times(tau, edges[-1], cfg.dt, edges)
    sup, inf = -math.inf, math.inf
    eps = 1e-12

    def account(t, u):
        nonlocal sup, inf
        if edges[0] - eps <= t <= edges[1] + eps:
            sup = max(sup, float(u[mask].max()))
        if edges[2] - eps <= t <= edges[3] + eps:
            inf = min(inf, float(u[mask].min()))

    u = v.values.ravel()
    account(tau, u)
    for t, u in propagate(u, A, times, cfg):
        account(t, u)
    flagged = inf <= 1e-12 * max(sup, 1e-300)
    return HarnackReport(float(R), tuple(float(c) for c in np.broadcast_to(x0, (g.dim,))), float(s), sup, inf, flagged)


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    C: float
    delta: float
    pairs: int
    slopes: dict


def _bucket_slope(seps: np.ndarray, vals: np.ndarray, h: float):
    """Median of slopes between consecutive half-octave buckets of ``max |dGamma|``."""
    edges = 2 * h * 2.0 ** (0.5 * np.arange(-1, 128))
    centers, levels = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (seps > a * (1 + 1e-9)) & (seps <= b * (1 + 1e-9)) & (vals > 0)
        if m.any():
            centers.append(math.log(np.exp(np.log(seps[m]).mean())))
            levels.append(math.log(vals[m].max()))
    if len(centers) < 2:
        return None
    c, l = np.array(centers), np.array(levels)
    return float(np.median(np.diff(l) / np.diff(c)))


def holder_exponent(K: KernelTable, delta: float, seed: int = 0, directions: int = 3) -> HolderFit:
    """Fit ``|dGamma| <= C delta^-n sep^alpha`` with ``sep = max(|dt|, |dx|, |dxi|)``.

    Only slices with ``t >= tau + delta^2`` take part and separations are kept
    in ``[2h, delta]``. Pairs come in three kinds: shifts of ``x`` (scales
    spaced by half-octaves, axis and seeded random directions, every base
    point), pairs of slices and pairs of sources. For each kind, the sup of
    ``|dGamma|`` in each half-octave bucket gives a log-log curve whose
    consecutive slopes are reduced by their median; ``alpha`` is the smallest
    kind's value, clipped to ``(0, 1]``.
    """
    g = K.grid
    n = g.dim
    h = g.h
    if delta < 4 * h:
        raise ValueError("delta must be at least 4h")
    ok = np.nonzero(K.slices >= K.tau + delta * delta * (1 - 1e-12))[0]
    if len(ok) == 0:
        raise ValueError("no slices beyond tau + delta^2")
    V = K.values[ok]
    lo, hi = 2 * h * (1 - 1e-9), delta * (1 + 1e-9)
    kinds: dict[str, tuple[list, list]] = {"x": ([], []), "t": ([], []), "xi": ([], [])}
    rng = member_rng(seed, 0, stream=7)
    dirs = [np.eye(n)[i] for i in range(n)]
    for _ in range(directions if n > 1 else 0):
        d = rng.normal(size=n)
        dirs.append(d / np.linalg.norm(d))
    octaves = math.log2(delta / (2 * h))
    for m in np.unique(np.rint(2 * 2.0 ** np.linspace(0, octaves, int(2 * octaves) + 1) * 1.0)):
        for d in dirs:
            off = np.rint(m * d).astype(int)
            sep = float(np.linalg.norm(off)) * h
            if not lo <= sep <= hi:
                continue
            shifted = np.roll(V, tuple(off), axis=tuple(range(2, 2 + n)))
            kinds["x"][0].append(sep)
            kinds["x"][1].append(float(np.abs(shifted - V).max()))
    ts = K.slices[ok]
    for i in range(len(ok)):
        for j in range(i + 1, len(ok)):
            sep = abs(ts[j] - ts[i])
            if lo <= sep <= hi:
                kinds["t"][0].append(sep)
                kinds["t"][1].append(float(np.abs(V[j] - V[i]).max()))
    src = K.source_points()
    for i in range(len(src)):
        for j in range(i + 1, len(src)):
            dv = (src[j] - src[i] + g.length / 2) % g.length - g.length / 2
            sep = float(np.linalg.norm(dv))
            if lo <= sep <= hi:
                kinds["xi"][0].append(sep)
                kinds["xi"][1].append(float(np.abs(V[:, j] - V[:, i]).max()))
    slopes = {}
    for name, (seps, vals) in kinds.items():
        s = _bucket_slope(np.array(seps), np.array(vals), h) if seps else None
        if s is not None:
            slopes[name] = s
    if not slopes:
        raise ValueError("insufficient separations for a Hölder fit")
    alpha = float(np.clip(min(slopes.values()), 1e-6, 1.0))
    seps = np.concatenate([np.array(v[0]) for v in kinds.values() if v[0]])
    vals = np.concatenate([np.array(v[1]) for v in kinds.values() if v[1]])
    C = float(np.max(vals / seps**alpha)) * delta**n
    return HolderFit(alpha, C, float(delta), int(len(seps)), slopes)


class NashIntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NashReport:
    c1: float
    c2: float
    beta: float
    p: float
    delta: float
    K: float
    K_needed: float
    passed: bool

    @property
    def margin(self) -> float:
        """``K / K_needed``; above one means the bound holds."""
        return self.K / self.K_needed if self.K_needed > 0 else math.inf


def nash_trajectory(c1, c2, beta, p, w, u0, t_grid):
    """Solve ``u' = -(c1/p) t^{p-2} u^{1+beta p} / w^{beta p} + c2 p u``.

    With ``y = u^{-beta p}`` the equation is linear,
    ``y' = beta c1 t^{p-2} / w^{beta p} - beta c2 p^2 y``, which an implicit
    stiff integrator handles without step-size trouble as ``u0`` grows.
    """
    bp = beta * p
    y0 = 0.0 if math.isinf(u0) else float(u0) ** -bp

    def rhs(t, y):
        return beta * c1 * t ** (p - 2) / w(t) ** bp - beta * c2 * p * p * y

    t_grid = np.asarray(t_grid, float)
    sol = solve_ivp(rhs, (0.0, float(t_grid[-1])), [y0], method="Radau", t_eval=t_grid, rtol=1e-10, atol=1e-300)
    if not sol.success:
        raise NashIntegrationError(sol.message)
    y = sol.y[0]
    with np.errstate(divide="ignore"):
        return np.where(y > 0, y ** (-1.0 / bp), np.inf)


def _k_needed(c1, c2, beta, p, delta, w, u0, t_grid) -> float:
    """Smallest ``K`` such that the stated bound holds on ``t_grid`` (t > 0)."""
    bp = beta * p
    u = nash_trajectory(c1, c2, beta, p, w, u0, t_grid)
    t = np.asarray(t_grid, float)
    m = t > 0
    # t^{(p-1)/bp} u <= (K p^2/delta)^{1/bp} e^{c2 delta t/p} w
    lhs = (p - 1) * np.log(t[m]) + bp * np.log(u[m])
    rhs = 2 * np.log(p) - np.log(delta) + bp * (c2 * delta * t[m] / p + np.log([w(s) for s in t[m]]))
    return float(np.exp(np.max(lhs - rhs)))


def nash_constant(c1: float, beta: float, kappa: float) -> float:
    """``K(c1, beta) = kappa / (beta c1)``."""
    return kappa / (beta * c1)


def fit_nash_kappa(draws) -> float:
    """Smallest ``kappa`` covering every draw ``(c1, c2, beta, p, delta, w, u0, t_grid)``."""
    return max(_k_needed(*d) * d[2] * d[0] for d in draws)


def nash_iteration_check(c1, c2, beta, p, delta, w, u0, kappa: float, t_grid=None) -> NashReport:
    if p < 2 or not 0 < delta <= 1 or min(c1, c2, beta) <= 0:
        raise ValueError("need p >= 2, delta in (0, 1], c1, c2, beta > 0")
    if t_grid is None:
        t_grid = np.geomspace(1e-4, 50.0 / max(c2 * beta * p * p, 1e-3), 400)
    K = nash_constant(c1, beta, kappa)
    need = _k_needed(c1, c2, beta, p, delta, w, u0, t_grid)
    return NashReport(c1, c2, beta, p, delta, K, need, bool(need <= K * (1 + 1e-9)))


def random_nash_draw(seed: int, index: int):
    """One randomized parameter set ``(c1, c2, beta, p, delta, w, u0, t_grid)``."""
    rng = member_rng(seed, index, stream=11)
    c1 = float(np.exp(rng.uniform(np.log(0.1), np.log(10))))
    c2 = float(np.exp(rng.uniform(np.log(0.01), np.log(2))))
    beta = float(rng.uniform(0.2, 2.0))
    p = float(2 * 2 ** rng.integers(0, 4))
    delta = float(rng.uniform(0.05, 1.0))
    slope = float(rng.uniform(0, 1))
    w0 = float(np.exp(rng.uniform(-1, 1)))
    u0 = float(10 ** rng.uniform(0, 3))

    def w(t, w0=w0, slope=slope):
        return w0 * (1 + slope * math.log1p(t))

    t_grid = np.geomspace(1e-4, 50.0 / (c2 * beta * p * p), 300)
    return c1, c2, beta, p, delta, w, u0, t_grid


@dataclass
class EntropyCurve:
    x: tuple[float, ...]
    t: np.ndarray
    G: np.ndarray
    unresolved: np.ndarray
    outside_mass: float
    floor: float = field(default=0.0)

    @property
    def G1(self) -> float:
        k = int(np.argmin(np.abs(self.t - 1.0)))
        return float(self.G[k])

    @property
    def resolved(self) -> np.ndarray:
        return self.unresolved <= 1e-6


def gaussian_weight(grid, origin) -> np.ndarray:
    """Standard Gaussian density at the cell centers, in displacement from ``origin``."""
    d = grid.distance(origin)
    return (2 * np.pi) ** (-grid.dim / 2) * np.exp(-0.5 * d * d)


def nash_entropy(
    A: CoefficientField, x, cfg: SolveConfig, t_values=None, origin=None, floor_rel: float = 1e-13
) -> EntropyCurve:
    """``G(t) = h^n sum_xi ln Gamma(x, 1; xi, 1 - t) mu(xi)`` for ``t`` in ``t_values``.

    ``x`` and the Gaussian ``mu`` are in the grid's own units, measured from
    ``origin`` (the torus center by default). One backward solve from the
    delta at ``x`` over ``[0, 1]`` gives every ``t``. Kernel values below
    ``floor_rel * max`` are not trusted; they are floored and the
    ``mu``-mass on them is reported per ``t``.
    """
    g = A.grid
    if t_values is None:
        t_values = np.linspace(0.125, 1.0, 8)
    t_values = np.asarray(sorted(float(t) for t in t_values))
    if t_values[0] <= 0 or t_values[-1] > 1 + 1e-12:
        raise ValueError("t values must lie in (0, 1]")
    origin = np.full(g.dim, g.length / 2) if origin is None else np.asarray(origin, float)
    mu = gaussian_weight(g, origin)
    outside = 1.0 - g.cell_volume * float(mu.sum())
    if outside > 1e-6:
        raise ValueError(f"Gaussian mass outside the grid is {outside:.2e} (> 1e-6); enlarge the torus")
    xpt = origin + np.asarray(x, float)
    xc = tuple(int(round(c / g.h)) % g.cells for c in xpt)
    starts = sorted({round(1.0 - t, 12) for t in t_values})
    times = step_times(0.0, 1.0, cfg.dt, starts)[::-1]
    V = np.zeros(g.size)
    V[np.ravel_multi_index(xc, g.shape)] = 1.0 / g.cell_volume
    want = {round(1.0 - t, 12): k for k, t in enumerate(t_values)}
    G = np.empty(len(t_values))
    unresolved = np.empty(len(t_values))
    hv = g.cell_volume
    muf = mu.ravel()
    floors = np.empty(len(t_values))
    for s, V in propagate(V, A, times, cfg, adjoint=True):
        k = want.get(round(float(s), 12))
        if k is None:
            continue
        fl = floor_rel * float(V.max())
        bad = V <= fl
        G[k] = hv * float(np.sum(np.log(np.maximum(V, fl)) * muf))
        unresolved[k] = hv * float(muf[bad].sum())
        floors[k] = fl
    return EntropyCurve(tuple(float(c) for c in np.broadcast_to(x, (g.dim,))), t_values, G, unresolved, outside, float(floors.min()))


def reports_to_csv(path, header, rows):
    return write_csv(path, header, rows)
