"""Shift operator T_x, autocorrelation functions, the controlled-shift circuit
and the numerical audit of g(x) against mu(tau_L(x)/2)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import GridSpec, Lattice, lift, mu_norm, tau_batch
from .witness import QuantumWitness, build_honest_witness

NORMALIZATION_TOL = 1e-9

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)


class GridMismatchError(ValueError):
    pass


def _check_shift(shape: tuple[int, ...], x: Sequence[int]) -> tuple[int, ...]:
    if len(x) != len(shape):
        raise GridMismatchError(f"shift of dimension {len(x)} on a {len(shape)}-dimensional grid")
    x = tuple(int(v) for v in x)
    if any(not 0 <= v < s for v, s in zip(x, shape)):
        raise GridMismatchError(f"shift {x} outside the grid {shape}")
    return x


def apply_shift(state: np.ndarray, x: Sequence[int]) -> np.ndarray:
    """T_x as a permutation of amplitudes: new[p] = old[p + x mod 2^m]."""
    x = _check_shift(state.shape, x)
    return np.roll(state, shift=tuple(-v for v in x), axis=tuple(range(state.ndim)))


def _require_normalized(state: np.ndarray) -> None:
    norm = float(np.linalg.norm(state))
    if abs(norm - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"state norm {norm} is not 1")


def autocorr_g(state: np.ndarray, x: Sequence[int]) -> float:
    """Re <state| T_x |state>."""
    _require_normalized(state)
    return float(np.vdot(state, apply_shift(state, x)).real)


def autocorr_h(witness: QuantumWitness, x: Sequence[int]) -> float:
    """sum_i w_i Re <alpha_i| T_x |alpha_i> for an ensemble witness."""
    return math.fsum(float(w) * autocorr_g(s, x) for w, s in zip(witness.weights, witness.states))


def _controlled_shift_run(state: np.ndarray, x: Sequence[int]) -> float:
    # register doubled by a control qubit on axis 0
    psi = np.stack([state, state]) / math.sqrt(2.0)
    psi[1] = apply_shift(psi[1], x)
    psi = np.tensordot(_H, psi, axes=([1], [0]))
    return float(np.vdot(psi[1], psi[1]).real)


def circuit_probability(witness: QuantumWitness, x: Sequence[int]) -> float:
    """Probability that the control qubit of C_x reads 1, simulated gate by gate."""
    return math.fsum(float(w) * _controlled_shift_run(s, x) for w, s in zip(witness.weights, witness.states))


# ------------------------------------------------------------------ audit ---


@dataclass(frozen=True)
class AuditRow:
    x: tuple[int, ...]
    dist: float
    g: float
    mu_half_tau: float
    abs_dev: float


@dataclass
class AuditReport:
    rows: list[AuditRow]

    @property
    def max_deviation(self) -> float:
        return max((r.abs_dev for r in self.rows), default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_coeffs", "d_x_L", "g", "mu_half_tau", "abs_dev"])
        for r in self.rows:
            w.writerow([" ".join(map(str, r.x)), repr(r.dist), repr(r.g), repr(r.mu_half_tau), repr(r.abs_dev)])
        return buf.getvalue()


def shift_distances(points: Sequence[Sequence[int]], lattice: Lattice, grid: GridSpec) -> np.ndarray:
    coeffs = np.asarray(points, dtype=float).reshape(-1, lattice.n) / grid.size
    return tau_batch(coeffs, lattice)[1]


def gaussian_autocorr_audit(state: np.ndarray, lattice: Lattice, grid: GridSpec,
                            sample_points: Sequence[Sequence[int]]) -> AuditReport:
    """Compare g(x) with mu(tau_L(x)/2) on each sample shift."""
    points = [tuple(int(v) for v in p) for p in sample_points]
    dists = shift_distances(points, lattice, grid)
    rows = []
    for p, d in zip(points, dists):
        g = autocorr_g(state, p)
        target = float(mu_norm(d / 2))
        rows.append(AuditRow(p, float(d), g, target, abs(g - target)))
    return AuditReport(rows)


def audit_sample_points(lattice: Lattice, grid: GridSpec, rng: np.random.Generator, n_samples: int = 512,
                        near_radius: float | None = None, near_fraction: float = 0.5) -> list[tuple[int, ...]]:
    """Half near-lattice shifts (tau within ``near_radius``), half uniform grid points."""
    n = lattice.n
    near_radius = 4 * math.sqrt(n) if near_radius is None else near_radius
    n_near = int(round(n_samples * near_fraction))
    all_pts = np.indices((grid.size,) * n).reshape(n, -1).T
    _, dist = tau_batch(all_pts / grid.size, lattice, radius=near_radius)
    near = all_pts[dist <= near_radius]
    picks = []
    if n_near and len(near):
        idx = rng.choice(len(near), size=n_near, replace=len(near) < n_near)
        picks.extend(near[idx])
    far = rng.integers(0, grid.size, size=(n_samples - len(picks), n))
    picks.extend(far)
    return [tuple(int(v) for v in p) for p in picks]


def autocorr_convergence(lattice: Lattice, ms: Sequence[int], rng: np.random.Generator, n_samples: int = 512,
                         ell: int = 1, near_radius: float | None = None) -> dict[int, float]:
    """Max audit deviation per grid exponent, on one sample set drawn at the coarsest m."""
    ms = sorted(ms)
    base = GridSpec(ms[0], ell=min(ell, ms[0] - 1))
    samples = audit_sample_points(lattice, base, rng, n_samples, near_radius)
    out = {}
    for m in ms:
        grid = GridSpec(m, ell=base.ell)
        state = build_honest_witness(lattice, grid).amplitudes
        pts = [lift(p, base, grid) for p in samples]
        out[m] = gaussian_autocorr_audit(state, lattice, grid, pts).max_deviation
    return out
