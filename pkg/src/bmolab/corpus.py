"""Seeded randomized corpora.

Member ``i`` of a corpus seeded with ``seed`` always draws from
``Philox(key=seed, counter=i)``, so membership does not depend on how many
members were drawn before it or on the platform.
"""

from __future__ import annotations

import itertools

import numpy as np

from .grid import Grid, ScalarField


def member_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    key = (int(seed) & (2**64 - 1)) | ((int(stream) & (2**64 - 1)) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(index)))


def random_fourier_field(
    grid: Grid,
    rng: np.random.Generator,
    kmax: int = 4,
    decay: float = 1.5,
    zero_mean: bool = False,
) -> ScalarField:
    """Random trigonometric polynomial with amplitudes ``~ |k|^-decay``."""
    coords = grid.coords()
    L = grid.length
    out = np.zeros(grid.shape)
    ks = [k for k in itertools.product(range(-kmax, kmax + 1), repeat=grid.dim)]
    for k in ks:
        knorm = np.sqrt(sum(c * c for c in k))
        if knorm == 0:
            continue
        amp = rng.normal() * knorm**-decay
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * kk * c / L for kk, c in zip(k, coords))
        out += amp * np.cos(arg + phase)
    if not zero_mean:
        out += rng.normal()
    return ScalarField(grid, out)


def random_smooth_fields(grid: Grid, count: int, seed: int, **kw) -> list[ScalarField]:
    return [random_fourier_field(grid, member_rng(seed, i), **kw) for i in range(count)]
