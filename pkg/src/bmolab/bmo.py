"""Discrete BMO machinery: oscillation estimators, mean normalization,
space-time mollification, logarithmic truncations and lattice operations.

The sup over balls is taken over a finite family: every cell center as a
center and dyadic radii ``2h, 4h, ... <= L/4``. A discrete ball is the set of
cells whose centers lie within torus distance ``r`` of the center cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gallery import CoefficientField, MatrixFieldFrame
from .grid import Grid, ScalarField
from .io import write_csv


@dataclass(frozen=True)
class BmoEstimate:
    value: float
    p: int
    radii: tuple[float, ...]
    centers: str
    per_radius: tuple[float, ...]

    def csv_row(self) -> list:
        return [self.value, self.p, len(self.radii)]


def dyadic_radii(grid: Grid) -> tuple[float, ...]:
    radii = []
    r = 2 * grid.h
    while r <= grid.length / 4 * (1 + 1e-12):
        radii.append(r)
        r *= 2
    return tuple(radii)


def _padded(v: np.ndarray, m: int) -> np.ndarray:
    return np.pad(v, m, mode="wrap")


def _ball_views(v: np.ndarray, grid: Grid, radius: float):
    """Yield one shifted view of ``v`` per ball offset (periodic)."""
    offs = grid.ball_offsets(radius)
    m = int(np.abs(offs).max()) if len(offs) else 0
    vp = _padded(v, m)
    N = grid.cells
    for o in offs:
        sl = tuple(slice(m + k, m + k + N) for k in o)
        yield vp[sl]


def ball_means(v: np.ndarray, grid: Grid, radius: float) -> np.ndarray:
    acc = np.zeros(grid.shape)
    count = 0
    for view in _ball_views(v, grid, radius):
        acc += view
        count += 1
    return acc / count


def _oscillation(v: np.ndarray, grid: Grid, radius: float, p: int) -> float:
    mean = ball_means(v, grid, radius)
    acc = np.zeros(grid.shape)
    count = 0
    for view in _ball_views(v, grid, radius):
        d = np.abs(view - mean)
        acc += d if p == 1 else d * d
        count += 1
    osc = acc / count
    return float(osc.max() if p == 1 else np.sqrt(osc.max()))


def bmo_norm(f: ScalarField, p: int = 1, radii=None) -> BmoEstimate:
    """Max over the ball family of ``(mean_B |f - f_B|^p)^(1/p)``."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    g = f.grid
    if radii is None:
        if g.cells < 16:
            raise ValueError("grid too coarse for a BMO estimate (need N >= 16)")
        radii = dyadic_radii(g)
    radii = tuple(float(r) for r in radii)
    if not radii:
        raise ValueError("empty radius family")
    # oscillations ignore constants; subtracting one makes constant fields exactly 0
    v = f.values - f.values.flat[0]
    per = tuple(_oscillation(v, g, r, p) for r in radii)
    return BmoEstimate(max(per), p, radii, "all cells", per)


def normalize_mean(f: ScalarField, ball_radius: float, center=None) -> ScalarField:
    """Subtract the average of ``f`` over the ball ``B(center, r)``."""
    g = f.grid
    if not g.h < ball_radius < g.length / 2:
        raise ValueError("ball_radius must lie in (h, L/2)")
    center = np.zeros(g.dim) if center is None else np.asarray(center, float)
    mask = ball_mask(g, center, ball_radius)
    return ScalarField(g, f.values - f.values[mask].mean())


def ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    return grid.distance(center) <= radius * (1 + 1e-12)


def bump_kernel(grid: Grid, scale: float) -> np.ndarray:
    """``(1 - |y/scale|^2)^2`` on ``|y| < scale``, unit discrete mass, centered at cell 0."""
    d = grid.distance(np.zeros(grid.dim)) / scale
    k = np.where(d < 1, (1 - d * d) ** 2, 0.0)
    return k / (k.sum() * grid.cell_volume)


def periodic_convolve(values: np.ndarray, kernel: np.ndarray, grid: Grid) -> np.ndarray:
    """``h^n sum_y kernel(y) values(x - y)`` on the torus."""
    out = np.fft.irfftn(
        np.fft.rfftn(values) * np.fft.rfftn(kernel), s=grid.shape, axes=range(grid.dim)
    )
    return out * grid.cell_volume


def _time_weights(times: np.ndarray, i: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Normalized time-bump weights for output slot ``i`` with reflection at the ends."""
    t0, t1 = times[0], times[-1]
    s = times - times[i]
    w = np.where(np.abs(s) < eps, (1 - (s / eps) ** 2) ** 2, 0.0)
    # mirror images across both ends fold back into the interval
    for mirror in (2 * t0 - times, 2 * t1 - times):
        sm = mirror - times[i]
        w = w + np.where(np.abs(sm) < eps, (1 - (sm / eps) ** 2) ** 2, 0.0)
    if len(times) > 1:
        w[0] *= 0.5
        w[-1] *= 0.5
    return w / w.sum(), w


def mollify(f, epsilon: float, times=None, time_epsilon: float | None = None):
    """Space-time mollification against ``Phi_eps(x) eta_eps(t)``.

    ``f`` is a ScalarField (stationary) or a sequence of ScalarFields sampled
    at ``times``. Returns the same shape of object.
    """
    single = isinstance(f, ScalarField)
    fields = [f] if single else list(f)
    g = fields[0].grid
    if not 2 * g.h * (1 - 1e-12) <= epsilon <= g.length / 8 * (1 + 1e-12):
        raise ValueError(f"epsilon must lie in [2h, L/8] = [{2 * g.h}, {g.length / 8}]")
    ker = bump_kernel(g, epsilon)
    space = [periodic_convolve(fl.values, ker, g) for fl in fields]
    if single or len(fields) == 1:
        out = [ScalarField(g, space[0])]
    else:
        times = np.asarray(times, float)
        te = epsilon if time_epsilon is None else time_epsilon
        out = []
        for i in range(len(fields)):
            w, _ = _time_weights(times, i, te)
            out.append(ScalarField(g, sum(wk * s for wk, s in zip(w, space) if wk != 0.0)))
    return out[0] if single else out


def mollify_frame(frame: MatrixFieldFrame, epsilon: float) -> MatrixFieldFrame:
    g = frame.grid
    n = g.dim
    ker_hat = np.fft.rfftn(bump_kernel(g, epsilon))
    A = np.empty_like(frame.A)
    for i in range(n):
        for j in range(n):
            A[..., i, j] = (
                np.fft.irfftn(np.fft.rfftn(frame.A[..., i, j]) * ker_hat, s=g.shape, axes=range(g.dim)) * g.cell_volume
            )
    return MatrixFieldFrame(g, A)


def mollify_coefficients(coef: CoefficientField, epsilon: float) -> CoefficientField:
    """Mollified coefficients keep the same ellipticity constant (convex averaging)."""
    if not 2 * coef.grid.h * (1 - 1e-12) <= epsilon <= coef.grid.length / 8 * (1 + 1e-12):
        raise ValueError("epsilon out of range [2h, L/8]")
    if coef.stationary:
        A = mollify_frame(coef.frame(0.0), epsilon).A
        return coef.derive(lambda t: A, name=f"{coef.name}*eps={epsilon:g}")
    return coef.derive(
        lambda t: mollify_frame(coef.frame(t), epsilon).A, name=f"{coef.name}*eps={epsilon:g}"
    )


def truncate_log(m: int, epsilon: float, grid: Grid, center=None) -> tuple[ScalarField, ScalarField]:
    """Upper/lower truncations of ``-eps log|x|`` at levels ``m``.

    ``U = (-eps log|x| + m) ^ m v 0`` and ``L = (eps log|x| - m) ^ 0 v (-m)``.
    """
    if m < 1 or epsilon <= 0:
        raise ValueError("need m >= 1 and epsilon > 0")
    center = np.zeros(grid.dim) if center is None else center
    r = grid.distance(center)
    with np.errstate(divide="ignore"):
        lg = np.log(r)
    U = np.clip(-epsilon * lg + m, 0.0, m)
    Lo = np.clip(epsilon * lg - m, -m, 0.0)
    return ScalarField(grid, U), ScalarField(grid, Lo)


def lattice_min_max(f: ScalarField, g: ScalarField) -> tuple[ScalarField, ScalarField]:
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return (
        ScalarField(f.grid, np.minimum(f.values, g.values)),
        ScalarField(f.grid, np.maximum(f.values, g.values)),
    )


def frame_bmo_norm(frame: MatrixFieldFrame, p: int = 1, radii=None) -> float:
    """``sqrt(sum_{i<j} ||b^{ij}||_BMO^2)`` for one frame."""
    n = frame.grid.dim
    b = frame.b
    tot = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            bij = b[..., i, j]
            if np.any(bij != bij.flat[0]):
                tot += bmo_norm(ScalarField(frame.grid, bij), p, radii).value ** 2
    return float(np.sqrt(tot))


def linf_bmo_norm(coef: CoefficientField, times=None, p: int = 1, radii=None) -> float:
    """Sup over time samples of the frame BMO norm of the skew part."""
    if coef.stationary:
        return frame_bmo_norm(coef.frame(0.0), p, radii)
    return max(frame_bmo_norm(fr, p, radii) for fr in coef.frames(times))


def estimates_to_csv(estimates, path) -> None:
    write_csv(path, ["value", "p", "radius_count"], (e.csv_row() for e in estimates))
