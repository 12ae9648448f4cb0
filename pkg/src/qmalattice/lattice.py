"""Exact lattice and grid arithmetic, the Gaussian weight mu, and brute-force
SVP/CVP oracles.

Bases are stored as rows of :class:`fractions.Fraction`; anything that has to
be a bijection (grid coefficients, reduction modulo the parallelepiped) is done
in integers or Fractions, and Euclidean norms are computed in doubles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ENUMERATION_LIMIT = 5
MAX_CANDIDATES = 4_000_000
DEFAULT_MAX_GRID_POINTS = 1 << 22

# sup |d/da exp(-pi a^2)|
MU_LIPSCHITZ = math.sqrt(2 * math.pi / math.e)


class EnumerationLimitError(ValueError):
    """Dimension or search box too large for exhaustive enumeration."""


def to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return parse_rational(value)
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(float(value))


def parse_rational(token: str) -> Fraction:
    """Parse ``p/q``, an integer, a decimal, or the dyadic form ``j/2^e``."""
    token = token.strip()
    if "^" in token:
        num, _, den = token.partition("/")
        base, _, exp = den.partition("^")
        return Fraction(int(num), int(base) ** int(exp))
    return Fraction(token)


def _det_fraction(rows: Sequence[Sequence[Fraction]]) -> Fraction:
    a = [list(r) for r in rows]
    n = len(a)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        for r in range(col + 1, n):
            factor = a[r][col] / a[col][col]
            if factor:
                for c in range(col, n):
                    a[r][c] -= factor * a[col][c]
    return det


def solve_fraction(rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> list[Fraction]:
    """Solve ``c @ rows = rhs`` exactly (row-vector convention)."""
    n = len(rows)
    # transpose: sum_i c_i rows[i][j] = rhs[j]
    a = [[Fraction(rows[i][j]) for i in range(n)] + [Fraction(rhs[j])] for j in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise ValueError("singular basis")
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
    return [a[i][n] for i in range(n)]


@dataclass(frozen=True)
class Lattice:
    """Full-rank lattice given by basis rows v_1..v_n."""

    basis: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(to_fraction(x) for x in row) for row in self.basis)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("basis must be a non-empty square matrix")
        object.__setattr__(self, "basis", rows)
        if self.det == 0:
            raise ValueError("basis is singular")

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable]) -> "Lattice":
        return cls(tuple(tuple(r) for r in rows))

    @classmethod
    def scaled_identity(cls, n: int, scale=1) -> "Lattice":
        s = to_fraction(scale)
        return cls(tuple(tuple(s if i == j else Fraction(0) for j in range(n)) for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.basis)

    @cached_property
    def det(self) -> Fraction:
        return _det_fraction(self.basis)

    @property
    def det_abs(self) -> Fraction:
        return abs(self.det)

    @cached_property
    def B(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.basis])

    @cached_property
    def B_inv(self) -> np.ndarray:
        return np.linalg.inv(self.B)

    @cached_property
    def inverse_column_norms(self) -> np.ndarray:
        # |c_j - a_j| <= ||x - p|| * ||B^{-1}[:, j]||  for x = aB, p = cB
        return np.linalg.norm(self.B_inv, axis=0)

    @cached_property
    def basis_norms(self) -> np.ndarray:
        return np.linalg.norm(self.B, axis=1)

    @cached_property
    def covering_bound(self) -> float:
        """Upper bound on d(x, L) for every x (Babai rounding)."""
        return 0.5 * float(self.basis_norms.sum())

    def coefficients(self, x: Sequence) -> tuple[Fraction, ...]:
        """Exact coefficients of a Euclidean point in this basis."""
        return tuple(solve_fraction(self.basis, [to_fraction(v) for v in x]))

    def point(self, coeffs: Sequence) -> tuple[Fraction, ...]:
        c = [to_fraction(v) for v in coeffs]
        return tuple(sum((c[i] * self.basis[i][j] for i in range(self.n)), Fraction(0)) for j in range(self.n))

    @cached_property
    def _diameter(self) -> float:
        eps = _box(np.full(self.n, -1), np.full(self.n, 1))
        return float(np.linalg.norm(eps @ self.B, axis=1).max())

    def parallelepiped_diameter(self, scale_exp: int = 0) -> float:
        """diam(P(L)) / 2^scale_exp, by enumerating vertex differences."""
        return self._diameter / 2**scale_exp


@dataclass(frozen=True)
class GridSpec:
    """The grid G = L / 2^m; ``ell`` is the bit precision of target coefficients."""

    m: int
    ell: int = 1

    def __post_init__(self):
        if self.ell < 0 or self.m < self.ell + 1:
            raise ValueError(f"grid needs m >= ell + 1 (m={self.m}, ell={self.ell})")

    @property
    def size(self) -> int:
        return 1 << self.m

    def num_points(self, n: int) -> int:
        return self.size**n

    def check_budget(self, n: int, max_points: int = DEFAULT_MAX_GRID_POINTS) -> None:
        if self.num_points(n) > max_points:
            raise MemoryError(f"grid of {self.num_points(n)} points exceeds budget {max_points}")

    def step(self, lattice: Lattice) -> float:
        """Shortest grid basis step, min ||v_i|| / 2^m."""
        return float(lattice.basis_norms.min()) / self.size


class Truth(str, Enum):
    YES = "YES"
    NO = "NO"
    UNPROMISED = "UNPROMISED"


@dataclass(frozen=True)
class Instance:
    """A coGapCVP' instance: lattice plus target v = sum a_i v_i, a_i in [0,1) dyadic."""

    lattice: Lattice
    target: tuple[Fraction, ...]
    ell: int = 1
    scale: float = 1.0
    truth: Truth | None = None

    def __post_init__(self):
        t = tuple(to_fraction(a) for a in self.target)
        object.__setattr__(self, "target", t)
        if len(t) != self.lattice.n:
            raise ValueError("target dimension does not match lattice")
        for a in t:
            if not 0 <= a < 1:
                raise ValueError(f"target coefficient {a} outside [0, 1)")
            if (1 << self.ell) % a.denominator:
                raise ValueError(f"target coefficient {a} is not a multiple of 2^-{self.ell}")

    @property
    def target_point(self) -> np.ndarray:
        return np.array([float(a) for a in self.target]) @ self.lattice.B


# ---------------------------------------------------------------- Gaussian ---


def mu(x) -> float:
    """exp(-pi ||x||^2) for a scalar or a vector."""
    x = np.asarray(x, dtype=float)
    return float(np.exp(-np.pi * np.sum(x * x)))


def mu_norm(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.exp(-np.pi * r * r)


def project(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Split x into its component along y and the component orthogonal to y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    yy = float(y @ y)
    if yy == 0.0:
        raise ValueError("cannot project on the zero vector")
    par = (float(x @ y) / yy) * y
    return par, x - par


def gaussian_mass_check(n: int, step: float, extent: float = 6.0, radius: float | None = None):
    """Riemann sums of mu over a product grid of spacing ``step`` on [-extent, extent]^n.

    Returns ``(total, ball_mass)`` where ball_mass is restricted to the ball of
    the given radius (default sqrt(n)).
    """
    if n > 3:
        raise ValueError("product-grid Riemann sums are limited to n <= 3")
    if step <= 0:
        raise ValueError("step must be positive")
    radius = math.sqrt(n) if radius is None else radius
    k = int(math.floor(extent / step))
    axis = step * np.arange(-k, k + 1)
    w1 = mu_norm(axis) * step
    r2 = axis * axis
    if n == 1:
        return math.fsum(w1), math.fsum(w1[r2 <= radius**2])
    if n == 2:
        w = w1[:, None] * w1[None, :]
        d2 = r2[:, None] + r2[None, :]
    else:
        w = w1[:, None, None] * w1[None, :, None] * w1[None, None, :]
        d2 = r2[:, None, None] + r2[None, :, None] + r2[None, None, :]
    return math.fsum(w.ravel()), math.fsum(w[d2 <= radius**2])


# ------------------------------------------------------------- grid points ---


def embed(p: Sequence[int], lattice: Lattice, grid: GridSpec) -> np.ndarray:
    """Euclidean image of sum_i (j_i / 2^m) v_i."""
    return np.asarray(p, dtype=float) / grid.size @ lattice.B


def grid_add(p: Sequence[int], q: Sequence[int], grid: GridSpec) -> tuple[int, ...]:
    return tuple((a + b) % grid.size for a, b in zip(p, q))


def grid_sub(p: Sequence[int], q: Sequence[int], grid: GridSpec) -> tuple[int, ...]:
    return tuple((a - b) % grid.size for a, b in zip(p, q))


def grid_neg(p: Sequence[int], grid: GridSpec) -> tuple[int, ...]:
    return tuple((-a) % grid.size for a in p)


def grid_scale(p: Sequence[int], factor: int, grid: GridSpec) -> tuple[int, ...]:
    return tuple((factor * a) % grid.size for a in p)


def lift(p: Sequence[int], grid: GridSpec, finer: GridSpec) -> tuple[int, ...]:
    """Same Euclidean point expressed on a finer grid."""
    if finer.m < grid.m:
        raise ValueError("can only lift to a finer grid")
    return tuple(int(a) << (finer.m - grid.m) for a in p)


def mod_parallelepiped(coeffs: Sequence, grid: GridSpec) -> tuple[int, ...]:
    """Reduce a dyadic coefficient vector into P(L) and return its grid point."""
    out = []
    for a in coeffs:
        j = to_fraction(a) * grid.size
        if j.denominator != 1:
            raise ValueError(f"coefficient {a} has denominator beyond 2^{grid.m}")
        out.append(int(j) % grid.size)
    return tuple(out)


def target_shift(instance: Instance, grid: GridSpec) -> tuple[int, ...]:
    if grid.m < instance.ell:
        raise ValueError("grid too coarse for the target precision")
    return mod_parallelepiped(instance.target, grid)


# ------------------------------------------------------------ enumeration ---


def _box(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    count = int(np.prod(hi - lo + 1))
    if count > MAX_CANDIDATES:
        raise EnumerationLimitError(f"search box of {count} candidates is too large")
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def _check_dim(lattice: Lattice, limit: int) -> None:
    if lattice.n > limit:
        raise EnumerationLimitError(f"dimension {lattice.n} exceeds enumeration limit {limit}")


def _exact_sq_dist(x: Sequence[Fraction], lattice: Lattice, c: Sequence[int]) -> Fraction:
    p = lattice.point(c)
    return sum(((a - b) ** 2 for a, b in zip(x, p)), Fraction(0))


def _pick(cands: np.ndarray, d2: np.ndarray, exact_key) -> int:
    """Index of the minimum; near-ties settled exactly, then lexicographically."""
    best = float(d2.min())
    near = np.flatnonzero(d2 <= best * (1 + 1e-9) + 1e-12)
    if len(near) == 1:
        return int(near[0])
    return int(min(near, key=lambda i: (exact_key(cands[i]), tuple(cands[i]))))


@dataclass(frozen=True)
class CVPResult:
    point: np.ndarray
    coeffs: tuple[int, ...]
    distance: float
    tau: np.ndarray


def closest_vector(x, lattice: Lattice, limit: int = ENUMERATION_LIMIT) -> CVPResult:
    """Exhaustive-enumeration closest lattice point to x.

    The search box is every integer coefficient vector within R * ||B^{-1} e_j||
    of x's coefficients, with R the distance to the Babai rounding point.
    """
    _check_dim(lattice, limit)
    x_exact = [to_fraction(v) for v in x]
    xf = np.array([float(v) for v in x_exact])
    a = xf @ lattice.B_inv
    babai = np.round(a)
    radius = float(np.linalg.norm(xf - babai @ lattice.B)) * (1 + 1e-9) + 1e-12
    span = radius * lattice.inverse_column_norms
    cands = _box(np.ceil(a - span), np.floor(a + span))
    diff = xf[None, :] - cands @ lattice.B
    d2 = np.einsum("ij,ij->i", diff, diff)
    i = _pick(cands, d2, lambda c: _exact_sq_dist(x_exact, lattice, c))
    c = tuple(int(v) for v in cands[i])
    point = cands[i] @ lattice.B
    tau = xf - point
    return CVPResult(point=point, coeffs=c, distance=float(np.sqrt(d2[i])), tau=tau)


@dataclass(frozen=True)
class SVPResult:
    vector: np.ndarray
    coeffs: tuple[int, ...]
    length: float
    sq_length: Fraction  # exact


def shortest_vector(lattice: Lattice, limit: int = ENUMERATION_LIMIT) -> SVPResult:
    """Shortest nonzero lattice vector by enumerating the box proven to contain it."""
    _check_dim(lattice, limit)
    radius = float(lattice.basis_norms.min()) * (1 + 1e-9)
    span = np.floor(radius * lattice.inverse_column_norms)
    cands = _box(-span, span)
    cands = cands[np.any(cands != 0, axis=1)]
    v = cands @ lattice.B
    d2 = np.einsum("ij,ij->i", v, v)
    zero = (Fraction(0),) * lattice.n
    i = _pick(cands, d2, lambda c: _exact_sq_dist(zero, lattice, c))
    c = tuple(int(t) for t in cands[i])
    return SVPResult(vector=v[i], coeffs=c, length=float(np.sqrt(d2[i])),
                     sq_length=_exact_sq_dist(zero, lattice, c))


def exact_sq_distance(x: Sequence, lattice: Lattice, coeffs: Sequence[int]) -> Fraction:
    return _exact_sq_dist([to_fraction(v) for v in x], lattice, coeffs)


def tau_batch(coeffs: np.ndarray, lattice: Lattice, radius: float | None = None,
              chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised tau_L for many points given by basis coefficients.

    Returns ``(tau, dist)``. With ``radius=None`` the covering bound is used and
    the result is exact everywhere; otherwise it is exact for every point whose
    distance is at most ``radius`` and a lower-bounded overestimate elsewhere.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    radius = lattice.covering_bound if radius is None else radius
    r = np.ceil(radius * (1 + 1e-9) * lattice.inverse_column_norms)
    offsets = _box(-r, r + 1)
    base = np.floor(coeffs)
    frac = coeffs - base
    tau = np.empty_like(coeffs)
    dist = np.empty(len(coeffs))
    B = lattice.B
    for s in range(0, len(coeffs), chunk):
        f = frac[s:s + chunk]
        diff = (f[:, None, :] - offsets[None, :, :]) @ B
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        best = np.argmin(d2, axis=1)
        rows = np.arange(len(f))
        tau[s:s + chunk] = diff[rows, best]
        dist[s:s + chunk] = np.sqrt(d2[rows, best])
    return tau, dist


# --------------------------------------------------------------- generators ---


def random_unimodular(n: int, rng: np.random.Generator, n_ops: int = 4) -> np.ndarray:
    """Integer matrix of determinant +-1 built from elementary row operations."""
    U = np.eye(n, dtype=np.int64)
    for _ in range(n_ops):
        i, j = rng.choice(n, size=2, replace=False)
        if rng.random() < 0.2:
            U[[i, j]] = U[[j, i]]
        else:
            U[i] += int(rng.choice([-1, 1])) * U[j]
    return U


def transform(lattice: Lattice, U: np.ndarray) -> Lattice:
    """Basis U @ B (same lattice when U is unimodular)."""
    rows = []
    for i in range(lattice.n):
        rows.append(tuple(sum((int(U[i, k]) * lattice.basis[k][j] for k in range(lattice.n)), Fraction(0))
                          for j in range(lattice.n)))
    return Lattice(tuple(rows))


def random_lattice(n: int, rng: np.random.Generator, scale=10, spread: int = 2, denom: int = 8,
                   min_length: float | None = None, max_tries: int = 200) -> Lattice:
    """scale * (I + P) with P having small dyadic entries.

    With ``min_length`` the draw is repeated until lambda_1 reaches it.
    """
    s = to_fraction(scale)
    for _ in range(max_tries):
        P = rng.integers(-spread, spread + 1, size=(n, n))
        rows = tuple(tuple(s * (Fraction(1 if i == j else 0) + Fraction(int(P[i, j]), denom)) for j in range(n))
                     for i in range(n))
        try:
            lat = Lattice(rows)
        except ValueError:
            continue
        if min_length is None or shortest_vector(lat).length >= min_length:
            return lat
    raise RuntimeError("could not draw a lattice meeting the length requirement")


def yes_threshold(n: int) -> float:
    """Desk-scale separation: lambda_1 and d(v, L) at least 4 sqrt(n) + 1."""
    return 4 * math.sqrt(n) + 1


# ------------------------------------------------------------- file format ---


def format_lattice_file(lattice: Lattice, grid: GridSpec, target: Sequence | None = None) -> str:
    lines = [f"{lattice.n} {grid.m} {grid.ell}"]
    for row in lattice.basis:
        lines.append(" ".join(str(x) for x in row))
    if target is not None:
        lines.append("target " + " ".join(str(to_fraction(a)) for a in target))
    return "\n".join(lines) + "\n"


def parse_lattice_file(text: str) -> tuple[Lattice, GridSpec, tuple[Fraction, ...] | None]:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty lattice file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError("header must be 'n m ell'")
    n, m, ell = (int(t) for t in head)
    if len(lines) < n + 1:
        raise ValueError(f"expected {n} basis rows")
    rows = []
    for ln in lines[1:n + 1]:
        toks = ln.split()
        if len(toks) != n:
            raise ValueError(f"basis row must have {n} entries: {ln!r}")
        rows.append(tuple(parse_rational(t) for t in toks))
    target = None
    rest = lines[n + 1:]
    if rest:
        toks = rest[0].split()
        if toks[0] != "target" or len(toks) != n + 1 or len(rest) > 1:
            raise ValueError("optional last line must be 'target a_1 ... a_n'")
        target = tuple(parse_rational(t) for t in toks[1:])
    grid = GridSpec(m=m, ell=ell)
    lattice = Lattice(tuple(rows))
    if target is not None:
        Instance(lattice, target, ell=ell)  # validates range and precision
    return lattice, grid, target


def read_lattice_file(path) -> tuple[Lattice, GridSpec, tuple[Fraction, ...] | None]:
    with open(path) as fh:
        return parse_lattice_file(fh.read())


def write_lattice_file(path, lattice: Lattice, grid: GridSpec, target=None) -> None:
    with open(path, "w") as fh:
        fh.write(format_lattice_file(lattice, grid, target))
