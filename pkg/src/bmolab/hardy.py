"""Grand maximal functions, Hardy-norm estimates and compensated-compactness
pairings on the periodic grid.

The maximal function is a sup over the dyadic scales ``2h, 4h, ..., L/4`` of
``|h_t * g|`` with ``h`` the polynomial bump used by :mod:`bmolab.bmo`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .bmo import bump_kernel, dyadic_radii, frame_bmo_norm
from .gallery import MatrixFieldFrame
from .grid import (
    Grid,
    ScalarField,
    cell_gradient,
    centered_diff,
    forward_diff,
    integrate,
    norms,
)
from .io import write_csv


class NonHardyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HardyEstimate:
    value: float
    scale_family: tuple[float, ...]
    mollifier: str = "poly_bump(1-|x|^2)^2"
    hardy: bool = True


@dataclass(frozen=True)
class PairingReport:
    pairing: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class FGradFReport:
    lhs: float
    rhs: float
    ratio: float


@dataclass(frozen=True)
class DivCurlReport:
    hardy: HardyEstimate
    bound: float
    ratio: float
    div_ok: bool
    curl_ok: bool


def scale_family(grid: Grid) -> tuple[float, ...]:
    return dyadic_radii(grid)


def grand_maximal(g: ScalarField, scales=None) -> ScalarField:
    grid = g.grid
    if grid.cells < 32:
        raise ValueError("grand_maximal needs N >= 32")
    scales = scale_family(grid) if scales is None else scales
    gh = np.fft.rfftn(g.values)
    out = np.zeros(grid.shape)
    for t in scales:
        kh = np.fft.rfftn(bump_kernel(grid, t))
        conv = np.fft.irfftn(gh * kh, s=grid.shape, axes=range(grid.dim)) * grid.cell_volume
        np.maximum(out, np.abs(conv), out=out)
    return ScalarField(grid, out)


def smoothed(g: ScalarField, t: float) -> ScalarField:
    """``h_t * g`` for a single scale."""
    grid = g.grid
    kh = np.fft.rfftn(bump_kernel(grid, t))
    return ScalarField(grid, np.fft.irfftn(np.fft.rfftn(g.values) * kh, s=grid.shape, axes=range(grid.dim)) * grid.cell_volume)


def hardy_norm(g: ScalarField, scales=None) -> HardyEstimate:
    """Integral of the grand maximal function; flagged when ``g`` has nonzero mean."""
    grid = g.grid
    scales = scale_family(grid) if scales is None else tuple(scales)
    mean = integrate(g) / grid.volume
    sup = float(np.abs(g.values).max())
    hardy = abs(mean) <= 1e-8 * sup if sup > 0 else True
    if not hardy:
        warnings.warn(f"field has mean {mean:.3g}; not in the Hardy space", NonHardyWarning)
    value = integrate(grand_maximal(g, scales))
    return HardyEstimate(value, scales, hardy=hardy)


def face_gradient_vectors(f: ScalarField) -> list[np.ndarray]:
    """Full gradient vectors on the faces of each axis.

    Entry ``[i]`` has shape ``grid.shape + (n,)``: component ``i`` is the
    normal difference, the others are centered differences averaged from the
    two adjacent cells.
    """
    g = f.grid
    n = g.dim
    v = f.values
    out = []
    for i in range(n):
        vec = np.empty(g.shape + (n,))
        for j in range(n):
            if j == i:
                vec[..., j] = forward_diff(v, i, g.h)
            else:
                c = centered_diff(v, j, g.h)
                vec[..., j] = 0.5 * (c + np.roll(c, -1, i))
        out.append(vec)
    return out


def compensated_pairing(f: ScalarField, g: ScalarField, b_frame: MatrixFieldFrame) -> PairingReport:
    """``int <grad f, b grad g>`` with ``b`` averaged to faces, and its BMO ratio."""
    grid = f.grid
    if g.grid != grid or b_frame.grid != grid:
        raise ValueError("grid mismatch")
    B = b_frame.A
    if not np.allclose(B, -np.swapaxes(B, -1, -2), atol=1e-14 * max(1.0, np.abs(B).max())):
        raise ValueError("b_frame must be skew-symmetric")
    b = b_frame.b
    n = grid.dim
    gf = face_gradient_vectors(f)
    gg = face_gradient_vectors(g)
    total = 0.0
    for i in range(n):
        bf = 0.5 * (b + np.roll(b, -1, i))
        total += float(np.sum(np.einsum("...j,...jk,...k->...", gf[i], bf, gg[i])))
    pairing = grid.cell_volume * total / n
    bmo = frame_bmo_norm(b_frame)
    bound = bmo * norms(f).h1_seminorm * norms(g).h1_seminorm
    ratio = abs(pairing) / bound if bound > 0 else 0.0
    return PairingReport(float(pairing), float(bound), float(ratio))


def fgradf_field(f: ScalarField, xi) -> ScalarField:
    xi = np.asarray(xi, float)
    grad = cell_gradient(f)
    return ScalarField(f.grid, f.values * sum(x * d.values for x, d in zip(xi, grad)))


def fgradf_hardy_check(f: ScalarField, xi) -> FGradFReport:
    """Hardy norm of ``f (xi . grad f)`` against ``|xi| ||grad f||_2 ||f||_2``."""
    xi = np.asarray(xi, float)
    nm = norms(f)
    rhs = float(np.linalg.norm(xi) * nm.h1_seminorm * nm.l2)
    if rhs == 0.0:
        return FGradFReport(0.0, 0.0, 0.0)
    lhs = hardy_norm(fgradf_field(f, xi)).value
    return FGradFReport(lhs, rhs, lhs / rhs)


def _l2_vec(E) -> float:
    g = E[0].grid
    return float(np.sqrt(g.cell_volume * sum(np.sum(e.values**2) for e in E)))


def div_curl_pairing(E, B, tol: float = 1e-8) -> DivCurlReport:
    """Hardy estimate of ``E . B`` for divergence-free ``E`` and curl-free ``B``.

    Both are cell-centered vector fields; divergence and curl are measured
    with centered differences.
    """
    grid = E[0].grid
    n = grid.dim
    h = grid.h
    div = sum(centered_diff(e.values, i, h) for i, e in enumerate(E))
    scale_e = max(max(float(np.abs(e.values).max()) for e in E), 1e-300)
    div_ok = float(np.abs(div).max()) <= tol * max(1.0, scale_e / h)
    curl = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            c = centered_diff(B[j].values, i, h) - centered_diff(B[i].values, j, h)
            curl = max(curl, float(np.abs(c).max()))
    scale_b = max(max(float(np.abs(b.values).max()) for b in B), 1e-300)
    curl_ok = curl <= tol * max(1.0, scale_b / h)
    dot = ScalarField(grid, sum(e.values * b.values for e, b in zip(E, B)))
    if not np.any(dot.values):
        est = HardyEstimate(0.0, scale_family(grid))
    else:
        est = hardy_norm(dot)
    bound = _l2_vec(E) * _l2_vec(B)
    ratio = est.value / bound if bound > 0 else 0.0
    return DivCurlReport(est, bound, ratio, div_ok, curl_ok)


def ratios_to_csv(rows, path, header=("index", "value", "bound", "ratio")) -> None:
    write_csv(path, header, rows)
