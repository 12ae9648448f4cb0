"""Witness states over the grid P(L) ∩ G.

A state is a dense complex array of shape ``(2^m,) * n``; entry ``[j_1, ..., j_n]``
is the amplitude of the grid point sum_i (j_i / 2^m) v_i. Mixed witnesses are
explicit convex combinations of such arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import GridSpec, Lattice, shortest_vector, tau_batch

NORM_TOL = 1e-12

ADVERSARIAL_KINDS = ("honest_for_no_instance", "lattice_delta", "wrong_width", "shifted", "random_phase")


@dataclass
class QuantumWitness:
    """Convex mixture sum_i w_i |alpha_i><alpha_i| of grid states (one entry when pure)."""

    m: int
    states: list[np.ndarray]
    weights: np.ndarray = field(default=None)
    label: str = ""

    def __post_init__(self):
        self.states = [np.asarray(s, dtype=complex) for s in self.states]
        if self.weights is None:
            self.weights = np.full(len(self.states), 1.0 / max(len(self.states), 1))
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.states):
            raise ValueError("one weight per state required")

    @classmethod
    def pure(cls, amplitudes: np.ndarray, m: int, label: str = "") -> "QuantumWitness":
        return cls(m=m, states=[amplitudes], weights=np.ones(1), label=label)

    @classmethod
    def mixture(cls, components: Sequence[tuple[float, "QuantumWitness | np.ndarray"]], m: int | None = None,
                label: str = "") -> "QuantumWitness":
        """Flatten weighted witnesses (pure or mixed) into one ensemble."""
        states, weights = [], []
        for w, comp in components:
            if isinstance(comp, QuantumWitness):
                if m is not None and comp.m != m:
                    raise ValueError("components live on different grids")
                m = comp.m
                states.extend(comp.states)
                weights.extend(w * comp.weights)
            else:
                states.append(comp)
                weights.append(w)
        if m is None:
            raise ValueError("grid exponent unknown")
        return cls(m=m, states=states, weights=np.array(weights), label=label)

    @property
    def n(self) -> int:
        return self.states[0].ndim

    @property
    def is_pure(self) -> bool:
        return len(self.states) == 1

    @property
    def amplitudes(self) -> np.ndarray:
        if not self.is_pure:
            raise ValueError("mixed witness has no single amplitude array")
        return self.states[0]

    def on_grid(self, n: int, grid: GridSpec) -> bool:
        return self.m == grid.m and self.n == n


def validate(witness: QuantumWitness) -> list[str]:
    """List every broken invariant; an empty list means the witness is valid."""
    problems = []
    size = 1 << witness.m
    if not witness.states:
        return ["witness has no states"]
    n = witness.states[0].ndim
    for i, s in enumerate(witness.states):
        if s.shape != (size,) * n:
            problems.append(f"state {i}: shape {s.shape} is not ({size},)*{n}")
            continue
        if not np.all(np.isfinite(s)):
            problems.append(f"state {i}: non-finite amplitudes")
            continue
        norm = float(np.linalg.norm(s))
        if abs(norm - 1.0) > NORM_TOL:
            problems.append(f"state {i}: norm {norm!r} differs from 1")
    w = witness.weights
    if np.any(w < 0):
        problems.append("negative ensemble weight")
    if abs(float(w.sum()) - 1.0) > NORM_TOL:
        problems.append(f"weights sum to {float(w.sum())!r}, not 1")
    return problems


def grid_coefficients(n: int, grid: GridSpec) -> np.ndarray:
    """All grid points of P(L) as basis coefficients, in C order of the state array."""
    j = np.indices((grid.size,) * n).reshape(n, -1).T
    return j / grid.size


def _gaussian_state(lattice: Lattice, grid: GridSpec, cutoff: float, width: float) -> np.ndarray:
    n = lattice.n
    _, dist = tau_batch(grid_coefficients(n, grid), lattice, radius=cutoff)
    amp = np.where(dist <= cutoff, np.exp(-math.pi * (dist / width) ** 2 / 2), 0.0)
    amp /= math.sqrt(math.fsum(amp * amp))
    return amp.reshape((grid.size,) * n).astype(complex)


def default_cutoff(n: int) -> float:
    return 2 * math.sqrt(n)


def build_honest_witness(lattice: Lattice, grid: GridSpec, cutoff: float | None = None, margin: float = 1.0,
                         max_points: int | None = None) -> QuantumWitness:
    """f(x) = sqrt(mu(tau_L(x))) / D on {d(x, L) <= cutoff}, 0 elsewhere.

    Requires lambda_1(L) >= 2 * cutoff + margin so that every support point has a
    unique nearest lattice point.
    """
    n = lattice.n
    cutoff = default_cutoff(n) if cutoff is None else cutoff
    _check_separation(lattice, cutoff, margin)
    if max_points is None:
        grid.check_budget(n)
    else:
        grid.check_budget(n, max_points)
    return QuantumWitness.pure(_gaussian_state(lattice, grid, cutoff, 1.0), grid.m, label="honest")


def _check_separation(lattice: Lattice, cutoff: float, margin: float) -> None:
    lam = shortest_vector(lattice).length
    if lam < 2 * cutoff + margin:
        raise ValueError(f"lambda_1 = {lam:.4g} < 2*cutoff + margin = {2 * cutoff + margin:.4g}")


def build_adversarial_witness(kind: str, lattice: Lattice, grid: GridSpec, *, gamma: float = 1.5,
                              shift: Sequence[int] | None = None, seed: int | None = None,
                              cutoff: float | None = None, margin: float = 1.0) -> QuantumWitness:
    """Cheating-prover states for soundness experiments.

    kinds: ``honest_for_no_instance`` (the honest construction, meant for a NO
    instance), ``lattice_delta`` (all weight on the lattice point of P(L)),
    ``wrong_width`` (Gaussian of width ``gamma``), ``shifted`` (honest state moved
    by ``shift``), ``random_phase`` (honest moduli with phases drawn from ``seed``).
    """
    n = lattice.n
    grid.check_budget(n)
    cutoff = default_cutoff(n) if cutoff is None else cutoff
    if kind == "honest_for_no_instance":
        w = build_honest_witness(lattice, grid, cutoff, margin)
        w.label = kind
        return w
    if kind == "lattice_delta":
        amp = np.zeros((grid.size,) * n, dtype=complex)
        amp[(0,) * n] = 1.0
        return QuantumWitness.pure(amp, grid.m, label=kind)
    if kind == "wrong_width":
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        _check_separation(lattice, cutoff, margin)
        return QuantumWitness.pure(_gaussian_state(lattice, grid, cutoff, gamma), grid.m, label=kind)
    if kind == "shifted":
        if shift is None or len(shift) != n:
            raise ValueError("shifted witness needs an n-dimensional grid shift")
        honest = build_honest_witness(lattice, grid, cutoff, margin)
        # new[p] = old[p - u]: the Gaussian bumps move by +u
        amp = np.roll(honest.amplitudes, shift=tuple(int(u) for u in shift), axis=tuple(range(n)))
        return QuantumWitness.pure(amp, grid.m, label=kind)
    if kind == "random_phase":
        if seed is None:
            raise ValueError("random_phase witness needs a seed")
        honest = build_honest_witness(lattice, grid, cutoff, margin)
        rng = np.random.Generator(np.random.Philox(seed))
        phase = np.exp(2j * math.pi * rng.random(honest.amplitudes.shape))
        return QuantumWitness.pure(honest.amplitudes * phase, grid.m, label=kind)
    raise ValueError(f"unknown witness kind {kind!r}; expected one of {ADVERSARIAL_KINDS}")


# ------------------------------------------------------------- file format ---


def format_witness(witness: QuantumWitness) -> str:
    lines = [f"{witness.n} {witness.m}"]
    mixed = not witness.is_pure
    for w, s in zip(witness.weights, witness.states):
        if mixed:
            lines.append(f"state {float(w)!r}")
        for idx in zip(*np.nonzero(s)):
            a = s[idx]
            lines.append(" ".join(str(int(j)) for j in idx) + f" {float(a.real)!r} {float(a.imag)!r}")
    return "\n".join(lines) + "\n"


def parse_witness(text: str) -> QuantumWitness:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty witness file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("header must be 'n m'")
    n, m = int(head[0]), int(head[1])
    size = 1 << m
    blocks: list[tuple[float, np.ndarray]] = []
    current = None
    for ln in lines[1:]:
        toks = ln.split()
        if toks[0] == "state":
            current = np.zeros((size,) * n, dtype=complex)
            blocks.append((float(toks[1]), current))
            continue
        if current is None:
            current = np.zeros((size,) * n, dtype=complex)
            blocks.append((1.0, current))
        if len(toks) != n + 2:
            raise ValueError(f"amplitude line must be 'j_1 .. j_n re im': {ln!r}")
        idx = tuple(int(t) for t in toks[:n])
        if any(not 0 <= j < size for j in idx):
            raise ValueError(f"grid index out of range: {ln!r}")
        current[idx] = complex(float(toks[n]), float(toks[n + 1]))
    if not blocks:
        blocks.append((1.0, np.zeros((size,) * n, dtype=complex)))
    return QuantumWitness(m=m, states=[b for _, b in blocks], weights=np.array([w for w, _ in blocks]))


def save_witness(path, witness: QuantumWitness) -> None:
    with open(path, "w") as fh:
        fh.write(format_witness(witness))


def load_witness(path) -> QuantumWitness:
    with open(path) as fh:
        return parse_witness(fh.read())
