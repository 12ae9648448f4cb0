"""Positive-semidefinite matrices and positive-definite functions on the grid.

Contains the Gram/eigenvalue checks, the 3x3 halving bound and its cascade,
the good/bad classification of shifts, the 4x4 triple test with its closed
form, and the pipeline that refutes a PD function suppressed at a short w.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .lattice import GridSpec, Lattice, grid_add, grid_neg, grid_scale, grid_sub, mu_norm, project, tau_batch
from .sampling import enumerate_ball_grid, sample_ball_grid

PSD_TOL = 1e-8
MAX_GRAM = 16


# ------------------------------------------------------------- matrices ---


def min_eigenvalue(M, tol: float = 1e-12, sym_tol: float = 1e-12, max_sweeps: int = 100) -> float:
    """Smallest eigenvalue of a real symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    k = A.shape[0]
    if k > MAX_GRAM:
        raise ValueError(f"matrix size {k} exceeds {MAX_GRAM}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    A = (A + A.T) / 2
    fro = max(float(np.linalg.norm(A)), 1e-300)
    upper = np.triu_indices(k, 1)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0) * float(np.linalg.norm(A[upper]))
        if off <= tol * fro:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * (abs(A[p, p]) + abs(A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return float(np.diag(A).min())


def is_psd(M, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(M) >= -tol


# ---------------------------------------------------------- PD functions ---


class PDFunctionView:
    """A real function on grid shifts with h(0) = 1, plus the tau_L geometry it lives on.

    Evaluations are memoised, so repeated Gram entries cost nothing.
    """

    def __init__(self, func: Callable[[tuple[int, ...]], float], lattice: Lattice, grid: GridSpec,
                 label: str = ""):
        self._func = func
        self.lattice = lattice
        self.grid = grid
        self.label = label
        self._cache: dict[tuple[int, ...], float] = {}
        self._tau: dict[tuple[int, ...], np.ndarray] = {}

    def __call__(self, x: Sequence[int]) -> float:
        key = tuple(int(v) % self.grid.size for v in x)
        if key not in self._cache:
            self._cache[key] = float(self._func(key))
        return self._cache[key]

    @property
    def origin_value(self) -> float:
        return self((0,) * self.lattice.n)

    def tau(self, x: Sequence[int]) -> np.ndarray:
        """tau_L of the shift, i.e. its shortest Euclidean representative."""
        key = tuple(int(v) % self.grid.size for v in x)
        if key not in self._tau:
            t, _ = tau_batch(np.asarray(key, dtype=float)[None, :] / self.grid.size, self.lattice)
            self._tau[key] = t[0]
        return self._tau[key]

    def norm(self, x: Sequence[int]) -> float:
        return float(np.linalg.norm(self.tau(x)))

    @classmethod
    def from_witness(cls, witness, lattice: Lattice, grid: GridSpec) -> "PDFunctionView":
        from .autocorr import autocorr_h

        if not witness.on_grid(lattice.n, grid):
            raise ValueError("witness does not live on this grid")
        return cls(lambda x: autocorr_h(witness, x), lattice, grid, label=witness.label or "witness")

    @classmethod
    def gaussian(cls, lattice: Lattice, grid: GridSpec, overrides: dict | None = None) -> "PDFunctionView":
        """h(x) = mu(tau_L(x)/2) with optional forced values at given shifts."""
        forced = {tuple(int(v) % grid.size for v in k): float(val) for k, val in (overrides or {}).items()}
        view = cls(lambda x: 0.0, lattice, grid, label="gaussian" if not forced else "gaussian+forced")
        view._func = lambda x: forced[x] if x in forced else float(mu_norm(view.norm(x) / 2))
        return view

    @classmethod
    def suppressed_gaussian(cls, lattice: Lattice, grid: GridSpec, w: Sequence[int], value: float):
        """Gaussian table except h(w) = h(-w) = value."""
        return cls.gaussian(lattice, grid, {tuple(w): value, grid_neg(w, grid): value})


def gram_matrix(h: PDFunctionView, points: Sequence[Sequence[int]]) -> np.ndarray:
    """M[i, j] = h(x_i - x_j) with subtraction in the grid group."""
    pts = [tuple(int(v) for v in p) for p in points]
    if len(pts) > MAX_GRAM:
        raise ValueError(f"at most {MAX_GRAM} points")
    k = len(pts)
    M = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            M[i, j] = h(grid_sub(pts[i], pts[j], h.grid))
    return M


def _check_unit_interval(b) -> None:
    if not -1 - 1e-9 <= b <= 1 + 1e-9:
        raise ValueError(f"value {b} outside [-1, 1]")


def halving_bound(b: float) -> float:
    """Largest value h(x/2) may take for a real PD h with h(0)=1 and h(x)=b."""
    _check_unit_interval(b)
    return math.sqrt(min(max((1 + b) / 2, 0.0), 1.0))


def halving_relaxation(b):
    """Linear upper bound (b + 3)/4 on halving_bound(b); exact for Fractions."""
    _check_unit_interval(b)
    return (b + 3) / 4


def halving_cascade(h0, k: int):
    """Bound on h(w / 2^k) from h(w) <= h0, by k halving steps; equals 1 - (1 - h0)/4^k."""
    if k < 0:
        raise ValueError("k must be non-negative")
    b = h0
    for _ in range(k):
        b = halving_relaxation(b)
    return b


# ---------------------------------------------------------- good and bad ---


@dataclass(frozen=True)
class GoodBadVerdict:
    point: tuple[int, ...]
    is_good: bool
    dev_half: float
    dev_full: float
    threshold: float
    wrapped: bool = False  # 2x no longer the double of x's short representative


def classify_good(h: PDFunctionView, x: Sequence[int], t: float) -> GoodBadVerdict:
    """x is good when |h(x) - mu(x/2)| <= t and |h(2x) - mu(x)| <= t."""
    x = tuple(int(v) % h.grid.size for v in x)
    r = h.norm(x)
    x2 = grid_scale(x, 2, h.grid)
    dev_half = abs(h(x) - float(mu_norm(r / 2)))
    dev_full = abs(h(x2) - float(mu_norm(r)))
    wrapped = abs(h.norm(x2) - 2 * r) > 1e-9 * (1 + r)
    return GoodBadVerdict(x, dev_half <= t and dev_full <= t, dev_half, dev_full, t, wrapped)


def gaussian_approx_fraction(h: PDFunctionView, points: Sequence[Sequence[int]], t: float) -> float:
    """Fraction of the points that are bad for h."""
    if not len(points):
        raise ValueError("empty point set")
    bad = sum(not classify_good(h, p, t).is_good for p in points)
    return bad / len(points)


# ------------------------------------------------------------ triple test ---


@dataclass(frozen=True)
class TestParams:
    """Desk-scale thresholds; the *_steps fields are in units of the grid step."""

    good_threshold: float = 1e-3
    short_steps: float = 1.5
    shell_steps: float = 3.0
    shell_tol_steps: float = 0.5
    parallel_tol_steps: float = 0.5
    det_tol: float = 1e-9
    n_triples: int = 32
    max_attempts: int = 20_000

    __test__ = False  # not a pytest class

    def radii(self, lattice: Lattice, grid: GridSpec) -> dict[str, float]:
        step = grid.step(lattice)
        return {
            "short": self.short_steps * step,
            "shell": self.shell_steps * step,
            "shell_tol": self.shell_tol_steps * step,
            "parallel_tol": self.parallel_tol_steps * step,
        }


def triple_gram(alpha: float, beta: float, hy: float) -> np.ndarray:
    """Gram matrix on {0, -z, z, y} with Gaussian entries written via alpha, beta, h(y)."""
    a4 = alpha**4
    return np.array([
        [1.0, alpha, alpha, hy],
        [alpha, 1.0, a4, beta],
        [alpha, a4, 1.0, beta],
        [hy, beta, beta, 1.0],
    ])


def triple_det_expansion(alpha: float, beta: float, hy: float) -> float:
    """Closed form of det(triple_gram(alpha, beta, hy))."""
    return (1 - alpha**4) * ((alpha**2 - 1) ** 2 * (1 - hy**2) - 2 * (beta - alpha * hy) ** 2)


def triple_det_floor(alpha: float, beta: float) -> float:
    """Smallest h(y) keeping triple_det_expansion non-negative (lower root of the quadratic)."""
    a2 = alpha * alpha
    disc = 4 * a2 * beta**2 + (1 + alpha**4) * ((1 - a2) ** 2 - 2 * beta**2)
    return (2 * alpha * beta - math.sqrt(max(disc, 0.0))) / (1 + alpha**4)


@dataclass
class TripleResult:
    z: tuple[int, ...]
    y: tuple[int, ...]
    det4: float
    closed_form: float
    gaussian_det4: float
    hy: float
    verdicts: dict[str, GoodBadVerdict]
    flagged: bool
    hypothesis_violations: list[str] = field(default_factory=list)

    @property
    def some_bad(self) -> bool:
        return any(not v.is_good for v in self.verdicts.values())


def triple_test(h: PDFunctionView, z: Sequence[int], y: Sequence[int], t: float,
                params: TestParams | None = None, hy: float | None = None) -> TripleResult:
    """4x4 PD test on {0, -z, z, y}.

    ``hy`` replaces h(+-y) in the matrix, which is how an upper bound on h(y)
    derived elsewhere (the halving cascade) is fed in. ``flagged`` means the
    determinant is negative, so a PD function with these values cannot have all
    of z, z+y, z-y good.
    """
    params = params or TestParams()
    g = h.grid
    z = tuple(int(v) % g.size for v in z)
    y = tuple(int(v) % g.size for v in y)
    M = gram_matrix(h, [(0,) * len(z), grid_neg(z, g), z, y])
    hy_used = h(y) if hy is None else float(hy)
    M[0, 3] = M[3, 0] = hy_used
    det4 = float(np.linalg.det(M))

    tz, ty = h.tau(z), h.tau(y)
    par, perp = project(tz, ty)
    alpha = float(mu_norm(np.linalg.norm(perp) / 2))
    beta = alpha * float(mu_norm(np.linalg.norm(ty) / 2))
    radii = params.radii(h.lattice, g)
    violations = []
    if np.linalg.norm(par) > radii["parallel_tol"] * (1 + 1e-12):
        violations.append("z not orthogonal enough to y")
    if abs(np.linalg.norm(perp) - radii["shell"]) > radii["shell_tol"] * (1 + 1e-12):
        violations.append("z off the test shell")
    if np.linalg.norm(ty) > radii["short"] * (1 + 1e-12):
        violations.append("y longer than the short radius")

    verdicts = {
        "z": classify_good(h, z, t),
        "z+y": classify_good(h, grid_add(z, y, g), t),
        "z-y": classify_good(h, grid_sub(z, y, g), t),
    }
    return TripleResult(z, y, det4, triple_det_expansion(alpha, beta, hy_used),
                        float(np.linalg.det(triple_gram(alpha, beta, hy_used))), hy_used, verdicts,
                        det4 < -params.det_tol, violations)


# ------------------------------------------------------- the certificate ---


@dataclass
class NoPDCertificate:
    w: tuple[int, ...]
    y: tuple[int, ...]
    k: int
    h_w: float
    h_y: float
    cascade_bound: float
    gaussian_y: float
    chain_min_eigenvalue: float
    triples: list[TripleResult]
    a1_size: int
    params: TestParams
    mu_w: float = 0.0
    w_verdict: GoodBadVerdict | None = None

    @property
    def cascade_contradiction(self) -> bool:
        """The cascade forces h(y) below its Gaussian value by more than the threshold."""
        return self.cascade_bound < self.gaussian_y - self.params.good_threshold

    @property
    def flagged(self) -> int:
        return sum(tr.flagged for tr in self.triples)

    @property
    def bad_fraction(self) -> float:
        """Lower bound on the share of bad points among the sampled triple points.

        A triple counts its directly bad points, or one point when only the
        determinant shows that some point must be bad.
        """
        if not self.triples:
            return 0.0
        bad = sum(max(sum(not v.is_good for v in tr.verdicts.values()), int(tr.flagged)) for tr in self.triples)
        return bad / (3 * len(self.triples))

    @property
    def violation_found(self) -> bool:
        return self.flagged > 0 or self.cascade_contradiction or self.chain_min_eigenvalue < -PSD_TOL

    def to_csv(self, h: PDFunctionView) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["point_coeffs", "role", "h", "mu_target", "verdict", "det4"])

        def fmt(p):
            return " ".join(map(str, p))

        wv = "good" if self.w_verdict is not None and self.w_verdict.is_good else "bad"
        out.writerow([fmt(self.w), "w", repr(self.h_w), repr(self.mu_w), wv, ""])
        out.writerow([fmt(self.y), "y", repr(self.h_y), repr(self.gaussian_y),
                      "bad" if self.cascade_contradiction else "good", ""])
        for tr in self.triples:
            for role, v in tr.verdicts.items():
                out.writerow([fmt(v.point), role, repr(h(v.point)), repr(float(mu_norm(h.norm(v.point) / 2))),
                              "good" if v.is_good else "bad", repr(tr.det4)])
        return buf.getvalue()


def signed_grid_coeffs(h: PDFunctionView, x: Sequence[int]) -> tuple[int, ...]:
    """Integer grid coefficients of tau_L(x)."""
    c = h.tau(x) @ h.lattice.B_inv * h.grid.size
    r = np.rint(c)
    if np.abs(c - r).max() > 1e-6:
        raise ValueError("tau_L(x) is not a grid vector")
    return tuple(int(v) for v in r)


def a1_members(h: PDFunctionView, y: Sequence[int], params: TestParams) -> np.ndarray:
    """Signed grid points of the thin shell orthogonal to y that the triple test needs."""
    radii = params.radii(h.lattice, h.grid)
    outer = radii["shell"] + radii["shell_tol"] + radii["parallel_tol"]
    pts = enumerate_ball_grid(outer, h.grid, h.lattice)
    ty = h.tau(y)
    keep = [p for p in pts if _in_a1(p, ty, h, radii)]
    return np.array(keep, dtype=np.int64).reshape(-1, h.lattice.n)


def _in_a1(c, ty, h: PDFunctionView, radii) -> bool:
    v = np.asarray(c, dtype=float) / h.grid.size @ h.lattice.B
    par, perp = project(v, ty)
    return (np.linalg.norm(par) <= radii["parallel_tol"] * (1 + 1e-12)
            and abs(np.linalg.norm(perp) - radii["shell"]) <= radii["shell_tol"] * (1 + 1e-12))


def no_pd_certificate(h: PDFunctionView, w: Sequence[int], params: TestParams | None = None,
                      rng: np.random.Generator | None = None) -> NoPDCertificate:
    """Try to refute that h is PD, Gaussian near the origin, and small at w.

    Halves w down to y = w/2^k inside the short radius, bounds h(y) by the
    cascade, then runs triple tests on shell points z drawn by the ball sampler
    with the cascade bound substituted for h(y).
    """
    params = params or TestParams()
    g = h.grid
    w = tuple(int(v) % g.size for v in w)
    if not any(w):
        raise ValueError("w = 0 gives no direction to halve along")
    radii = params.radii(h.lattice, g)
    wc = signed_grid_coeffs(h, w)
    wnorm = h.norm(w)
    k = 0
    while wnorm / 2**k > radii["short"] * (1 + 1e-12):
        k += 1
    if any(c % (1 << k) for c in wc):
        raise ValueError(f"w/2^{k} is not on the grid; refine the grid or enlarge the short radius")
    yc = tuple(c >> k for c in wc)
    y = tuple(c % g.size for c in yc)

    h_w = h(w)
    cascade = halving_cascade(min(max(h_w, -1.0), 1.0), k)
    gaussian_y = float(mu_norm(h.norm(y) / 2))
    chain = [(0,) * len(w)] + [grid_scale(y, 1 << j, g) for j in range(k + 1)]
    chain_eig = min_eigenvalue(gram_matrix(h, chain))
    hy = min(h(y), cascade)

    members = a1_members(h, y, params)
    triples: list[TripleResult] = []
    if len(members):
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(0))
        outer = radii["shell"] + radii["shell_tol"] + radii["parallel_tol"]
        ty = h.tau(y)
        attempts = 0
        while len(triples) < params.n_triples and attempts < params.max_attempts:
            attempts += 1
            s = sample_ball_grid(outer, g, h.lattice, rng)
            if _in_a1(s.coeffs, ty, h, radii):
                triples.append(triple_test(h, s.shift, y, params.good_threshold, params, hy=hy))
    return NoPDCertificate(w=w, y=y, k=k, h_w=h_w, h_y=h(y), cascade_bound=float(cascade), gaussian_y=gaussian_y,
                           chain_min_eigenvalue=chain_eig, triples=triples, a1_size=len(members), params=params,
                           mu_w=float(mu_norm(wnorm / 2)), w_verdict=classify_good(h, w, params.good_threshold))


def cascade_identity(h0: Fraction, k: int) -> bool:
    """Loop of (b+3)/4 steps against 1 - (1-h0)/4^k, exactly."""
    return halving_cascade(h0, k) == 1 - (1 - h0) / Fraction(4) ** k
