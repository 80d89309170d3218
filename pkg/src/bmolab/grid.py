"""Periodic uniform grids, cell fields and conservative discrete calculus.

Layout: cell ``k`` (a multi-index) has its center at ``k*h`` on the torus
``[0, L)^n``. Face values on axis ``i`` stored at index ``k`` live on the face
between cells ``k`` and ``k + e_i``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Periodic uniform lattice on the torus ``[0, length)^dim``."""

    dim: int
    cells: int
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.cells) != self.cells or self.cells < 4:
            raise ValueError(f"cells must be an integer >= 4, got {self.cells}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.dim

    @property
    def size(self) -> int:
        return self.cells**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates, one broadcastable array per axis."""
        x = np.arange(self.cells) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def displacement(self, x0) -> tuple[np.ndarray, ...]:
        """Signed torus displacement ``x - x0`` per axis, in ``[-L/2, L/2)``."""
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (self.dim,))
        L = self.length
        return tuple((c - p + 0.5 * L) % L - 0.5 * L for c, p in zip(self.coords(), x0))

    def distance(self, x0) -> np.ndarray:
        """Torus distance from every cell center to the point ``x0``."""
        return np.sqrt(sum(d * d for d in self.displacement(x0)))

    def point(self, index) -> np.ndarray:
        return np.asarray(index, dtype=float) * self.h

    def wrap(self, index) -> tuple[int, ...]:
        return tuple(int(i) % self.cells for i in np.broadcast_to(index, (self.dim,)))

    def ball_offsets(self, radius: float) -> np.ndarray:
        """Integer offsets ``k`` with ``|k| h <= radius`` (no torus wrap)."""
        m = int(np.floor(radius / self.h + 1e-9))
        if 2 * m + 1 > self.cells:
            raise ValueError("ball wraps around the torus")
        rng = np.arange(-m, m + 1)
        pts = np.array(list(itertools.product(rng, repeat=self.dim)))
        keep = np.sqrt((pts**2).sum(axis=1)) * self.h <= radius * (1 + 1e-12)
        return pts[keep]


class ScalarField:
    """Cell-centered samples of a real function on a grid (read-only)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float).reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def delta(cls, grid: Grid, index) -> "ScalarField":
        """Unit-mass indicator of one cell."""
        v = np.zeros(grid.shape)
        v[grid.wrap(index)] = 1.0 / grid.cell_volume
        return cls(grid, v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.coords()), grid.shape))

    def _check(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("grid mismatch")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._check(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._check(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self):
        return f"ScalarField(grid={self.grid!r})"


@dataclass(frozen=True)
class FaceFluxField:
    """One real per cell face; ``components[i][k]`` sits on face ``k + e_i/2``."""

    grid: Grid
    components: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("need one face array per axis")
        comps = []
        for c in self.components:
            c = np.array(c, dtype=float).reshape(self.grid.shape)
            if not np.all(np.isfinite(c)):
                raise ValueError("face values must be finite")
            c.flags.writeable = False
            comps.append(c)
        object.__setattr__(self, "components", tuple(comps))


class Norms(NamedTuple):
    l1: float
    l2: float
    linf: float
    h1_seminorm: float


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def integrate(f: ScalarField) -> float:
    """Midpoint quadrature ``h^n * sum(values)``."""
    return float(f.grid.cell_volume * np.sum(f.values))


def forward_diff(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(v, -1, axis=axis) - v) / h


def backward_diff(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (v - np.roll(v, 1, axis=axis)) / h


def centered_diff(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2 * h)


def discrete_gradient(f: ScalarField) -> FaceFluxField:
    g = f.grid
    return FaceFluxField(g, tuple(forward_diff(f.values, i, g.h) for i in range(g.dim)))


def flux_divergence(F: FaceFluxField) -> ScalarField:
    g = F.grid
    out = sum(backward_diff(c, i, g.h) for i, c in enumerate(F.components))
    return ScalarField(g, out)


def cell_gradient(f: ScalarField) -> tuple[ScalarField, ...]:
    """Face gradients averaged back to cells (the centered difference)."""
    g = f.grid
    return tuple(ScalarField(g, centered_diff(f.values, i, g.h)) for i in range(g.dim))


def cell_divergence(E) -> ScalarField:
    g = E[0].grid
    return ScalarField(g, sum(centered_diff(e.values, i, g.h) for i, e in enumerate(E)))


def perp_gradient(psi: ScalarField) -> tuple[ScalarField, ScalarField]:
    """``(-d2 psi, d1 psi)`` with centered differences; divergence-free on the grid."""
    if psi.grid.dim != 2:
        raise ValueError("perp_gradient needs n = 2")
    d1, d2 = cell_gradient(psi)
    return (-d2, d1)


def norms(f: ScalarField) -> Norms:
    g = f.grid
    v = f.values
    grad = discrete_gradient(f)
    h1 = np.sqrt(g.cell_volume * sum(np.sum(c * c) for c in grad.components))
    return Norms(
        l1=float(g.cell_volume * np.abs(v).sum()),
        l2=float(np.sqrt(g.cell_volume * np.sum(v * v))),
        linf=float(np.abs(v).max()),
        h1_seminorm=float(h1),
    )


def nash_ratio(f: ScalarField) -> float:
    """``||f||_2^(2+4/n) / (||grad f||_2^2 ||f||_1^(4/n))``; 0 for constant f."""
    n = f.grid.dim
    nm = norms(f)
    den = nm.h1_seminorm**2 * nm.l1 ** (4.0 / n)
    if den == 0.0:
        return 0.0
    return nm.l2 ** (2 + 4.0 / n) / den


def field_to_csv(f: ScalarField, path) -> None:
    """One row per cell: index tuple then value."""
    from .io import write_csv

    n = f.grid.dim
    rows = ([*idx, float(f.values[idx])] for idx in np.ndindex(f.grid.shape))
    write_csv(path, [f"i{k}" for k in range(n)] + ["value"], rows)
