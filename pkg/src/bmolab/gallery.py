"""Coefficient fields ``A = a + b`` and the built-in gallery of families.

``a`` is the symmetric (elliptic) part and ``b`` the skew part that carries a
divergence-free drift. In 2-D the single skew entry ``b^{12}`` is a stream
function for the drift ``(-d2 b12, d1 b12)``; in 3-D a vector potential
``beta`` enters through ``b^{ij} = sum_k eps_{ijk} beta^k``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .grid import Grid, ScalarField
from .io import write_csv

FAMILIES = (
    "identity",
    "anisotropic",
    "smooth_skew",
    "log_vortex",
    "stream_function",
    "time_oscillating",
)


class EllipticityError(ValueError):
    pass


class MatrixFieldFrame:
    """Per-cell ``n x n`` matrices at one instant."""

    __slots__ = ("grid", "A")

    def __init__(self, grid: Grid, A):
        n = grid.dim
        A = np.array(A, dtype=float).reshape(grid.shape + (n, n))
        if not np.all(np.isfinite(A)):
            raise ValueError("matrix field entries must be finite")
        A.flags.writeable = False
        self.grid = grid
        self.A = A

    @classmethod
    def from_parts(cls, grid: Grid, a, b) -> "MatrixFieldFrame":
        return cls(grid, np.asarray(a) + np.asarray(b))

    @property
    def a(self) -> np.ndarray:
        return 0.5 * (self.A + np.swapaxes(self.A, -1, -2))

    @property
    def b(self) -> np.ndarray:
        return 0.5 * (self.A - np.swapaxes(self.A, -1, -2))

    def transpose(self) -> "MatrixFieldFrame":
        return MatrixFieldFrame(self.grid, np.swapaxes(self.A, -1, -2))

    def skew_component(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.b[..., i, j])

    def ellipticity_bounds(self) -> tuple[float, float]:
        """Smallest and largest eigenvalue of ``a`` over all cells."""
        ev = np.linalg.eigvalsh(self.a.reshape(-1, self.grid.dim, self.grid.dim))
        return float(ev.min()), float(ev.max())

    def check_ellipticity(self, lam: float, rtol: float = 1e-12) -> None:
        lo, hi = self.ellipticity_bounds()
        if lo < lam * (1 - rtol) or hi > (1 / lam) * (1 + rtol):
            raise EllipticityError(
                f"eigenvalues of a in [{lo:.6g}, {hi:.6g}] violate [{lam:.6g}, {1 / lam:.6g}]"
            )

    def is_diagonal(self) -> bool:
        n = self.grid.dim
        off = self.a.copy()
        off[..., range(n), range(n)] = 0.0
        return not np.any(off)


class CoefficientField:
    """Time-indexed family of frames with a declared ellipticity constant."""

    def __init__(
        self,
        grid: Grid,
        lam: float,
        frame_fn: Callable[[float], np.ndarray],
        stationary: bool = True,
        name: str = "custom",
        params: dict | None = None,
        time_grid=None,
        check: bool = True,
    ):
        if not lam > 0:
            raise EllipticityError(f"ellipticity constant must be positive, got {lam}")
        self.grid = grid
        self.lam = float(lam)
        self._fn = frame_fn
        self.stationary = stationary
        self.name = name
        self.params = dict(params or {})
        self.time_grid = np.asarray(time_grid if time_grid is not None else [0.0], dtype=float)
        self._cache: dict[float, MatrixFieldFrame] = {}
        if check:
            for t in self.time_grid:
                self.frame(t).check_ellipticity(self.lam)

    @classmethod
    def stationary_from(cls, frame: MatrixFieldFrame, lam: float, name="custom", params=None):
        A = frame.A
        return cls(frame.grid, lam, lambda t: A, True, name, params)

    def frame(self, t: float = 0.0) -> MatrixFieldFrame:
        key = 0.0 if self.stationary else float(t)
        fr = self._cache.get(key)
        if fr is None:
            fr = MatrixFieldFrame(self.grid, self._fn(key))
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = fr
        return fr

    def frames(self, times=None) -> list[MatrixFieldFrame]:
        times = self.time_grid if times is None else times
        return [self.frame(t) for t in times]

    def derive(self, frame_fn, grid=None, name=None, stationary=None, check=False, lam=None):
        return CoefficientField(
            grid or self.grid,
            self.lam if lam is None else lam,
            frame_fn,
            self.stationary if stationary is None else stationary,
            name or self.name,
            self.params,
            self.time_grid,
            check=check,
        )

    def transpose(self) -> "CoefficientField":
        fn = self._fn
        return self.derive(lambda t: np.swapaxes(np.asarray(fn(t)), -1, -2), name=self.name + "^T")

    def tiled(self, reps: int) -> "CoefficientField":
        """The same periodic field on a torus ``reps`` times wider per axis."""
        g = self.grid
        big = Grid(g.dim, g.cells * reps, g.length * reps)
        fn = self._fn
        tiles = (reps,) * g.dim + (1, 1)
        return self.derive(lambda t: np.tile(np.asarray(fn(t)), tiles), grid=big)

    def skew_sup(self, times=None) -> float:
        return max(float(np.abs(fr.b).max()) for fr in self.frames(times))


def _identity_a(grid: Grid, nu: float = 1.0) -> np.ndarray:
    n = grid.dim
    return np.broadcast_to(nu * np.eye(n), grid.shape + (n, n)).copy()


def _skew_from_b12(grid: Grid, b12: np.ndarray) -> np.ndarray:
    n = grid.dim
    b = np.zeros(grid.shape + (n, n))
    b[..., 0, 1] = b12
    b[..., 1, 0] = -b12
    return b


def skew_from_vector_potential(beta) -> np.ndarray:
    """``b^{ij} = sum_k eps_{ijk} beta^k`` for a 3-vector field ``beta``."""
    b1, b2, b3 = (np.asarray(c, dtype=float) for c in beta)
    out = np.zeros(b1.shape + (3, 3))
    out[..., 0, 1], out[..., 1, 0] = b3, -b3
    out[..., 1, 2], out[..., 2, 1] = b1, -b1
    out[..., 2, 0], out[..., 0, 2] = b2, -b2
    return out


def log_vortex_values(grid: Grid, eps: float, center, cutoff: float | None = None) -> np.ndarray:
    cutoff = grid.h if cutoff is None else cutoff
    r = np.maximum(grid.distance(center), cutoff)
    return eps * np.log(r / grid.length)


def _nu_lambda(nu: float) -> float:
    return min(nu, 1.0 / nu)


def gallery_field(name: str, params: dict | None, grid: Grid, time_grid=None) -> CoefficientField:
    """Build one of the named coefficient families on ``grid``.

    The declared ``lam`` can be overridden with ``params["lambda"]``; it is
    validated against every produced frame.
    """
    p = dict(params or {})
    n = grid.dim
    L = grid.length
    x = grid.coords()
    declared = p.pop("lambda", None)
    nu = float(p.get("nu", 1.0))
    if nu <= 0:
        raise EllipticityError("nu must be positive")
    stationary = True

    if name == "identity":
        A = _identity_a(grid, nu)
        lam = _nu_lambda(nu)

    elif name == "anisotropic":
        diag = np.broadcast_to(np.asarray(p.get("diag", [1.0] + [0.25] * (n - 1)), float), (n,))
        amp = float(p.get("amp", 0.0))
        if np.any(diag <= 0) or not 0 <= amp < 1:
            raise EllipticityError("anisotropic: diag must be positive and 0 <= amp < 1")
        A = np.zeros(grid.shape + (n, n))
        for i in range(n):
            mod = 1.0 + amp * np.sin(2 * np.pi * x[i] / L)
            A[..., i, i] = diag[i] * mod
        lo, hi = diag.min() * (1 - amp), diag.max() * (1 + amp)
        lam = min(lo, 1.0 / hi)

    elif name == "smooth_skew":
        amp = float(p.get("amp", 1.0))
        k = int(p.get("k", 1))
        A = _identity_a(grid, nu)
        if n == 2:
            A += _skew_from_b12(grid, amp * np.sin(2 * np.pi * k * x[0] / L) * np.cos(2 * np.pi * k * x[1] / L))
        elif n == 3:
            beta = [amp * np.sin(2 * np.pi * k * x[(i + 1) % 3] / L) for i in range(3)]
            A += skew_from_vector_potential(beta)
        lam = _nu_lambda(nu)

    elif name == "log_vortex":
        if n == 1:
            raise ValueError("log_vortex needs n >= 2 (no skew part in 1-D)")
        eps = float(p.get("eps", 0.5))
        center = p.get("center", [L / 2] * n)
        cutoff = p.get("cutoff")
        A = _identity_a(grid, nu) + _skew_from_b12(grid, log_vortex_values(grid, eps, center, cutoff))
        lam = _nu_lambda(nu)

    elif name == "stream_function":
        if n != 2:
            raise ValueError("stream_function is defined for n = 2")
        amp = float(p.get("amp", 1.0))
        k1, k2 = p.get("modes", (1, 1))
        psi = amp * np.sin(2 * np.pi * k1 * x[0] / L) * np.sin(2 * np.pi * k2 * x[1] / L)
        A = _identity_a(grid, nu) + _skew_from_b12(grid, psi)
        lam = _nu_lambda(nu)

    elif name == "time_oscillating":
        base = gallery_field(p.get("base", "smooth_skew"), p.get("base_params", {}), grid)
        amp = float(p.get("amp", 0.5))
        omega = 2 * np.pi / float(p.get("period", 1.0))
        fr = base.frame(0.0)
        a0, b0 = fr.a, fr.b
        lam = declared if declared is not None else base.lam

        def envelope(t):
            return 1.0 + amp * np.sin(omega * t)

        field = CoefficientField(
            grid, lam, lambda t: a0 + envelope(t) * b0, False, name, params, time_grid
        )
        field.envelope = envelope
        return field

    else:
        raise ValueError(f"unknown gallery family {name!r}; choose from {FAMILIES}")

    if declared is not None:
        lam = float(declared)
    A.flags.writeable = False
    return CoefficientField(grid, lam, lambda t: A, stationary, name, params, time_grid)


def skew_edge_velocity(frame: MatrixFieldFrame) -> tuple[np.ndarray, ...]:
    """Face-normal drift induced by the skew part.

    ``b^{ij}`` is averaged to the corners of the ``(i, j)`` plane; the face
    value on axis ``j`` is ``sum_i (corner(+e_i/2) - corner(-e_i/2)) / h``,
    a discrete ``sum_i d_i b^{ij}``. The result has zero discrete divergence
    identically (each corner value enters a cell's outflow twice with opposite
    signs).
    """
    g = frame.grid
    n = g.dim
    b = frame.b
    v = [np.zeros(g.shape) for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            bij = b[..., i, j]
            corner = 0.25 * (
                bij
                + np.roll(bij, -1, i)
                + np.roll(bij, -1, j)
                + np.roll(np.roll(bij, -1, i), -1, j)
            )
            # face on axis j gets d_i b^{ij}; face on axis i gets d_j b^{ji}
            v[j] += (corner - np.roll(corner, 1, i)) / g.h
            v[i] -= (corner - np.roll(corner, 1, j)) / g.h
    return tuple(v)


def frame_to_csv(frame: MatrixFieldFrame, path) -> None:
    g = frame.grid
    n = g.dim
    header = [f"i{k}" for k in range(n)] + [f"A{r}{c}" for r in range(n) for c in range(n)]
    rows = ([*idx, *(float(v) for v in frame.A[idx].ravel())] for idx in np.ndindex(g.shape))
    write_csv(path, header, rows)
