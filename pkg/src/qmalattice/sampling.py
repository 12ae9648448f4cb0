"""Seeded randomness and the uniform sampler over grid points of a ball."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import GridSpec, Lattice, _box

DEFAULT_MAX_RETRIES = 10_000
_BALL_SLACK = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def trial_seeds(seed: int, count: int) -> list[int]:
    """Independent 64-bit seeds for ``count`` trials, derived from one base seed."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def grid_norm(coeffs, lattice: Lattice, grid: GridSpec) -> np.ndarray:
    v = np.asarray(coeffs, dtype=float) / grid.size @ lattice.B
    return np.sqrt(np.sum(v * v, axis=-1))


def in_ball(coeffs, lattice: Lattice, grid: GridSpec, radius: float):
    return grid_norm(coeffs, lattice, grid) <= radius * (1 + _BALL_SLACK)


def enumerate_ball_grid(radius: float, grid: GridSpec, lattice: Lattice) -> np.ndarray:
    """Every grid point of norm <= radius, as signed integer coefficients."""
    span = np.floor(radius * (1 + _BALL_SLACK) * grid.size * lattice.inverse_column_norms)
    cands = _box(-span, span)
    return cands[in_ball(cands, lattice, grid, radius)]


@dataclass(frozen=True)
class BallSample:
    shift: tuple[int, ...]   # reduced mod 2^m
    coeffs: tuple[int, ...]  # signed grid coefficients of the sampled vector
    norm: float
    tries: int


def sample_ball_grid(radius: float, grid: GridSpec, lattice: Lattice, rng: np.random.Generator,
                     max_retries: int = DEFAULT_MAX_RETRIES) -> BallSample:
    """Uniform grid point of the ball of ``radius`` by rejection.

    Draws z uniformly from the ball enlarged by diam(P(G)), rounds its grid
    coefficients down and keeps the result if it lies in the ball. Every cell
    x + P(G) of an accepted x sits inside the enlarged ball, so all accepted
    points are equally likely.
    """
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    n = lattice.n
    outer = radius + lattice.parallelepiped_diameter(grid.m)
    for tries in range(1, max_retries + 1):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        z = d * outer * rng.random() ** (1.0 / n)
        c = np.floor(z @ lattice.B_inv * grid.size).astype(np.int64)
        if in_ball(c, lattice, grid, radius):
            return BallSample(shift=tuple(int(v) % grid.size for v in c), coeffs=tuple(int(v) for v in c),
                              norm=float(grid_norm(c, lattice, grid)), tries=tries)
    raise RuntimeError(f"ball sampler gave up after {max_retries} retries")
