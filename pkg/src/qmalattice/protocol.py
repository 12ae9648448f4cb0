"""Super-verifier, its k-register amplification, the SVP -> CVP' reduction and
the experiment drivers built on them."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .autocorr import circuit_probability
from .lattice import (
    GridSpec,
    Instance,
    Lattice,
    Truth,
    closest_vector,
    exact_sq_distance,
    mu_norm,
    random_lattice,
    shortest_vector,
    target_shift,
    tau_batch,
    to_fraction,
    yes_threshold,
)
from .sampling import make_rng, sample_ball_grid, trial_seeds
from .witness import QuantumWitness, build_adversarial_witness, build_honest_witness

NO_THRESHOLD = Fraction(1, 3)
ACCEPT_LEVEL = 0.99
_RULE_SLACK = 1e-12


class TestKind(str, Enum):
    TARGET_TEST = "TARGET_TEST"
    SHORT_TEST = "SHORT_TEST"
    QMA_TEST = "QMA_TEST"  # plain QMA verifier viewed as (V, r=1, s=1/2)

    __test__ = False


class Mode(str, Enum):
    EXACT_PROB = "exact"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class TestDescriptor:
    """A test (V, r, s): run the controlled shift by ``shift``, expect P(1) = r within s."""

    shift: tuple[int, ...]
    r: float
    s: float
    kind: TestKind
    norm: float = 0.0  # length of the shift vector x'

    __test__ = False

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"r = {self.r} outside [0, 1]")
        if self.s <= 0:
            raise ValueError("s must be positive")
        if self.kind is TestKind.TARGET_TEST and self.r != 0.5:
            raise ValueError("a target test always expects r = 1/2")


def qma_descriptor(shift: Sequence[int]) -> TestDescriptor:
    """A plain QMA verifier as a super-verifier: expect acceptance 1 within 1/2."""
    return TestDescriptor(tuple(shift), r=1.0, s=0.5, kind=TestKind.QMA_TEST)


@dataclass(frozen=True)
class ProtocolConfig:
    k: int = 2000
    p2: float | None = None  # measured, never assumed
    p3: float = 0.1
    s_desk: float = 0.05
    ball_radius: float | None = None  # None means 4 grid steps
    seed: int = 0
    mode: Mode = Mode.SAMPLED

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.p3 < 1:
            raise ValueError("p3 must lie in (0, 1)")
        if self.s_desk <= 0:
            raise ValueError("s must be positive")
        if self.ball_radius is not None and self.ball_radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "mode", Mode(self.mode))

    def radius(self, lattice: Lattice, grid: GridSpec) -> float:
        return 4 * grid.step(lattice) if self.ball_radius is None else self.ball_radius


def accept_rule(r_prime: float, r: float, s: float, p3: float) -> bool:
    """|r' - r| <= s + p3/2."""
    return abs(r_prime - r) <= s + p3 / 2 + _RULE_SLACK


@dataclass
class TestRecord:
    descriptor: TestDescriptor
    p: float         # exact acceptance probability of one register, averaged over registers
    r_prime: float   # fraction of 1s (SAMPLED) or its expectation (EXACT_PROB)
    passed: bool


@dataclass
class ProtocolReport:
    records: list[TestRecord]
    accept: bool
    diagnostics: dict = field(default_factory=dict)


# ------------------------------------------------------- super-verifier ---


def _shift_norm(coeffs: Sequence[int], lattice: Lattice, grid: GridSpec) -> float:
    return float(np.linalg.norm(np.asarray(coeffs, dtype=float) / grid.size @ lattice.B))


def super_verifier_sample(instance: Instance, grid: GridSpec, config: ProtocolConfig, rng: np.random.Generator,
                          force: TestKind | None = None) -> TestDescriptor:
    """Pick the target test or a short-shift test with probability 1/2 each."""
    kind = force if force is not None else (TestKind.TARGET_TEST if rng.random() < 0.5 else TestKind.SHORT_TEST)
    lattice = instance.lattice
    if kind is TestKind.TARGET_TEST:
        shift = target_shift(instance, grid)
        _, d = tau_batch(np.asarray(shift, dtype=float)[None, :] / grid.size, lattice)
        return TestDescriptor(shift, 0.5, config.s_desk, kind, float(d[0]))
    if kind is not TestKind.SHORT_TEST:
        raise ValueError(f"super-verifier has no {kind} branch")
    x = sample_ball_grid(config.radius(lattice, grid), grid, lattice, rng)
    factor = 2 if rng.random() < 0.5 else 1
    coeffs = tuple(factor * c for c in x.coeffs)
    norm = _shift_norm(coeffs, lattice, grid)
    r = (1.0 - float(mu_norm(norm / 2))) / 2
    return TestDescriptor(tuple(c % grid.size for c in coeffs), r, config.s_desk, kind, norm)


def run_super_test(descriptor: TestDescriptor, witness: QuantumWitness, mode: Mode = Mode.EXACT_PROB,
                   rng: np.random.Generator | None = None) -> float:
    """P(1) for the descriptor's circuit, or one measured bit in SAMPLED mode."""
    p = circuit_probability(witness, descriptor.shift)
    if Mode(mode) is Mode.EXACT_PROB:
        return p
    if rng is None:
        raise ValueError("SAMPLED mode needs a generator")
    return float(rng.random() < p)


# ------------------------------------------------------- k registers ---


@dataclass
class MultiWitness:
    """A classically correlated ensemble over k-tuples of register states.

    Each component is (weight, registers) with one witness per register; a
    product witness is the single component whose registers are all equal.
    """

    components: list[tuple[float, list[QuantumWitness]]]

    def __post_init__(self):
        if not self.components:
            raise ValueError("empty ensemble")
        ks = {len(regs) for _, regs in self.components}
        if len(ks) != 1:
            raise ValueError("all components need the same register count")
        total = math.fsum(w for w, _ in self.components)
        if any(w < 0 for w, _ in self.components) or abs(total - 1) > 1e-12:
            raise ValueError("component weights must be a probability vector")

    @classmethod
    def product(cls, witness: QuantumWitness, k: int) -> "MultiWitness":
        return cls([(1.0, [witness] * k)])

    @classmethod
    def correlated(cls, components: Sequence[tuple[float, Sequence[QuantumWitness]]]) -> "MultiWitness":
        return cls([(float(w), list(regs)) for w, regs in components])

    @property
    def k(self) -> int:
        return len(self.components[0][1])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def average_state(self) -> QuantumWitness:
        """rho_bar: the ensemble average of the k single-register reduced states."""
        parts = []
        for w, regs in self.components:
            parts.extend((w / self.k, reg) for reg in regs)
        return QuantumWitness.mixture(parts, label="average")

    def register_probabilities(self, shift: Sequence[int], cache: dict | None = None) -> list[np.ndarray]:
        """Per component, the acceptance probability of each register."""
        cache = {} if cache is None else cache
        out = []
        for _, regs in self.components:
            ps = []
            for reg in regs:
                key = (id(reg), tuple(shift))
                if key not in cache:
                    cache[key] = circuit_probability(reg, shift)
                ps.append(cache[key])
            out.append(np.array(ps))
        return out


def qma_amplified_verify(instance: Instance, grid: GridSpec, multi: MultiWitness, config: ProtocolConfig,
                         rng: np.random.Generator, descriptor: TestDescriptor | None = None,
                         force: TestKind | None = None, cache: dict | None = None) -> ProtocolReport:
    """Draw one test, apply it to each of the k registers and compare r' with r.

    SAMPLED mode draws the ensemble component first and then one Bernoulli
    outcome per register. EXACT_PROB mode uses r' = E[r'], which is the
    acceptance probability of the averaged register state.
    """
    if multi.k != config.k:
        raise ValueError(f"witness has {multi.k} registers, config expects {config.k}")
    desc = descriptor if descriptor is not None else super_verifier_sample(instance, grid, config, rng, force)
    probs = multi.register_probabilities(desc.shift, cache)
    weights = multi.weights
    p_avg = math.fsum(w * float(ps.mean()) for w, ps in zip(weights, probs))
    if config.mode is Mode.EXACT_PROB:
        r_prime = p_avg
        comp = None
    else:
        comp = int(rng.choice(len(weights), p=weights)) if len(weights) > 1 else 0
        values, counts = np.unique(probs[comp], return_counts=True)
        ones = sum(int(rng.binomial(int(c), float(v))) for v, c in zip(values, counts))
        r_prime = ones / config.k
    ok = accept_rule(r_prime, desc.r, desc.s, config.p3)
    return ProtocolReport([TestRecord(desc, p_avg, r_prime, ok)], ok,
                          {"component": comp, "tolerance": desc.s + config.p3 / 2})


def chernoff_acceptance_bound(k: int, p3: float) -> float:
    """Hoeffding lower bound on the honest acceptance probability."""
    return 1 - 2 * math.exp(-2 * k * (p3 / 2) ** 2)


# ----------------------------------------------------------- instances ---


def distance_to_lattice_sq(instance: Instance) -> Fraction:
    """Exact d(v, L)^2 by enumeration."""
    v = instance.lattice.point(instance.target)
    res = closest_vector(v, instance.lattice)
    return exact_sq_distance(v, instance.lattice, res.coeffs)


def _at_least(sq: Fraction, thr) -> int:
    """Compare sqrt(sq) with thr: -1, 0 or 1, exactly when thr is rational."""
    if isinstance(thr, (Fraction, int)):
        t2 = Fraction(thr) ** 2
        return (sq > t2) - (sq < t2)
    d = math.sqrt(float(sq))
    return (d > thr) - (d < thr)


def classify_instance(instance: Instance, yes_thr=None, no_thr=NO_THRESHOLD) -> Truth:
    """YES: lambda_1 >= yes_thr and d(v, L) > yes_thr. NO: d(v, L) <= no_thr."""
    lattice = instance.lattice
    yes_thr = yes_threshold(lattice.n) if yes_thr is None else yes_thr
    d2 = distance_to_lattice_sq(instance)
    if _at_least(d2, no_thr) <= 0:
        return Truth.NO
    lam2 = shortest_vector(lattice).sq_length
    if _at_least(lam2, yes_thr) >= 0 and _at_least(d2, yes_thr) > 0:
        return Truth.YES
    return Truth.UNPROMISED


def default_yes_instance() -> tuple[Instance, GridSpec]:
    """15 Z^2 with target coefficients (1/2, 0), at distance 15/2 from L."""
    lat = Lattice.scaled_identity(2, 15)
    return Instance(lat, (Fraction(1, 2), Fraction(0)), ell=1, truth=Truth.YES), GridSpec(7, 1)


def default_no_instance() -> tuple[Instance, GridSpec]:
    """(32/3) Z^2 with v = (1/3, 0), so d(v, L) = 1/3."""
    lat = Lattice.scaled_identity(2, Fraction(32, 3))
    return Instance(lat, (Fraction(1, 32), Fraction(0)), ell=5, truth=Truth.NO), GridSpec(7, 5)


# ----------------------------------------------------------- reduction ---


def reduce_svp_to_cvp(lattice: Lattice) -> list[Instance]:
    """Instance i: basis with v_i doubled, target v_i (coefficient 1/2 in the new basis)."""
    out = []
    for i in range(lattice.n):
        rows = [tuple(2 * x for x in row) if j == i else row for j, row in enumerate(lattice.basis)]
        target = tuple(Fraction(1, 2) if j == i else Fraction(0) for j in range(lattice.n))
        out.append(Instance(Lattice(tuple(rows)), target, ell=1))
    return out


@dataclass
class ReductionCheck:
    truth: Truth
    lambda1: float
    distances: list[float]
    sub_lambda1: list[float]
    holds: bool
    witness_index: int | None = None  # odd coefficient used on the NO side


def svp_truth(lattice: Lattice, beta, gamma=1) -> Truth:
    """SVP promise: NO when lambda_1 <= gamma, YES when lambda_1 > beta."""
    lam2 = shortest_vector(lattice).sq_length
    if _at_least(lam2, gamma) <= 0:
        return Truth.NO
    if _at_least(lam2, beta) > 0:
        return Truth.YES
    return Truth.UNPROMISED


def check_reduction(lattice: Lattice, beta, gamma=1) -> ReductionCheck:
    """Verify the YES or NO guarantee of the reduction against brute force."""
    truth = svp_truth(lattice, beta, gamma)
    sv = shortest_vector(lattice)
    mapped = reduce_svp_to_cvp(lattice)
    d2 = [distance_to_lattice_sq(inst) for inst in mapped]
    sub = [shortest_vector(inst.lattice).sq_length for inst in mapped]
    dist = [math.sqrt(float(v)) for v in d2]
    sub_l = [math.sqrt(float(v)) for v in sub]
    idx = None
    if truth is Truth.YES:
        holds = all(_at_least(v, beta) >= 0 for v in d2) and all(_at_least(v, beta) >= 0 for v in sub)
    elif truth is Truth.NO:
        odd = [j for j, a in enumerate(sv.coeffs) if a % 2]
        holds = False
        for j in odd:
            if d2[j] <= sv.sq_length:
                holds, idx = True, j
                break
    else:
        holds = True
    return ReductionCheck(truth, sv.length, dist, sub_l, holds, idx)


# ----------------------------------------------------------- experiments ---

PROTOCOL_COLUMNS = ["seed", "instance_id", "test_kind", "shift_coeffs", "r", "s", "p_or_rprime", "pass"]
REDUCTION_COLUMNS = ["seed", "instance_id", "n", "truth", "lambda1", "min_distance", "pass"]


@dataclass
class ExperimentResult:
    kind: str
    accept_rate: float
    overall_accept: bool
    csv: str
    reports: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _protocol_row(seed, instance_id, rec: TestRecord, value: float):
    return [seed, instance_id, rec.descriptor.kind.value, " ".join(map(str, rec.descriptor.shift)),
            repr(rec.descriptor.r), repr(rec.descriptor.s), repr(value), int(rec.passed)]


def _amplified_runs(kind, instance, grid, multi, config, trials, instance_id, force=None):
    seeds = trial_seeds(config.seed, trials)
    cache: dict = {}
    reports, rows = [], []
    for seed in seeds:
        rep = qma_amplified_verify(instance, grid, multi, config, make_rng(seed), force=force, cache=cache)
        reports.append(rep)
        rows.append(_protocol_row(seed, instance_id, rep.records[0], rep.records[0].r_prime))
    rate = sum(r.accept for r in reports) / trials
    return ExperimentResult(kind, rate, rate >= ACCEPT_LEVEL, _csv(PROTOCOL_COLUMNS, rows), reports)


def run_experiment(kind: str, config: ProtocolConfig | None = None, *, trials: int = 1000,
                   instance: tuple[Instance, GridSpec] | None = None, witness: QuantumWitness | None = None,
                   witness_kind: str = "honest_for_no_instance", force: TestKind | None = None,
                   n_lattices: int = 50, beta: float = 2.0, **kwargs) -> ExperimentResult:
    """Seeded driver for completeness, soundness, markov, reduction and pd-audit runs.

    ``overall_accept`` for protocol kinds means the acceptance rate reached
    ACCEPT_LEVEL, i.e. the runs look like an honest prover on a YES instance.
    """
    config = config or ProtocolConfig()
    if kind == "completeness":
        inst, grid = instance or default_yes_instance()
        w = witness or build_honest_witness(inst.lattice, grid)
        return _amplified_runs(kind, inst, grid, MultiWitness.product(w, config.k), config, trials,
                               kwargs.get("instance_id", "yes"), force)
    if kind == "soundness":
        inst, grid = instance or default_no_instance()
        w = witness or build_adversarial_witness(witness_kind, inst.lattice, grid, seed=config.seed)
        res = _amplified_runs(kind, inst, grid, MultiWitness.product(w, config.k), config, trials,
                              kwargs.get("instance_id", "no"), force)
        res.diagnostics["rejection_rate"] = 1 - res.accept_rate
        if force is None:
            res.diagnostics["p2_estimate"] = 1 - res.accept_rate
        return res
    if kind == "markov":
        return _markov_experiment(config, trials, instance)
    if kind == "reduction":
        return _reduction_experiment(config, n_lattices, beta)
    if kind == "pd-audit":
        return _pd_audit_experiment(config, instance, witness, kwargs.get("w"), kwargs.get("suppress"))
    raise ValueError(f"unknown experiment kind {kind!r}")


def markov_ensemble(lattice: Lattice, grid: GridSpec, seed: int = 0) -> MultiWitness:
    """A two-register correlated adversary mixing honest, delta and shifted states."""
    honest = build_honest_witness(lattice, grid)
    delta = build_adversarial_witness("lattice_delta", lattice, grid)
    shifted = build_adversarial_witness("shifted", lattice, grid, shift=(3,) + (0,) * (lattice.n - 1))
    return MultiWitness.correlated([(0.5, [honest, delta]), (0.3, [delta, delta]), (0.2, [shifted, honest])])


def _markov_experiment(config, trials, instance) -> ExperimentResult:
    inst, grid = instance or default_yes_instance()
    multi = markov_ensemble(inst.lattice, grid, config.seed)
    cfg = ProtocolConfig(k=multi.k, p3=config.p3, s_desk=config.s_desk, ball_radius=config.ball_radius,
                         seed=config.seed, mode=Mode.SAMPLED)
    desc = super_verifier_sample(inst, grid, cfg, make_rng(config.seed), force=TestKind.SHORT_TEST)
    p_bar = circuit_probability(multi.average_state(), desc.shift)
    rng = make_rng(config.seed)
    cache: dict = {}
    values, rows = [], []
    for t in range(trials):
        rep = qma_amplified_verify(inst, grid, multi, cfg, rng, descriptor=desc, cache=cache)
        values.append(rep.records[0].r_prime)
        rows.append(_protocol_row(t, "markov", rep.records[0], rep.records[0].r_prime))
    v = np.array(values)
    sigma = float(v.std(ddof=1) / math.sqrt(trials))
    accept_rate = float(np.mean([r[-1] for r in rows]))
    return ExperimentResult("markov", accept_rate, accept_rate >= ACCEPT_LEVEL, _csv(PROTOCOL_COLUMNS, rows),
                            diagnostics={"mean_rprime": float(v.mean()), "p_average_state": p_bar,
                                         "sigma": sigma, "shift": desc.shift})


def random_promise_lattice(rng: np.random.Generator, beta: float, yes: bool, n: int) -> Lattice:
    """Random lattice certified (by enumeration) to be a YES or NO instance of the SVP promise."""
    for _ in range(200):
        if yes:
            lat = random_lattice(n, rng, scale=Fraction(int(rng.integers(3, 7))))
        else:
            lat = random_lattice(n, rng, scale=Fraction(int(rng.integers(2, 9)), 8))
        if svp_truth(lat, beta) is (Truth.YES if yes else Truth.NO):
            return lat
    raise RuntimeError("could not draw a promise instance")


def _reduction_experiment(config, n_lattices, beta) -> ExperimentResult:
    seeds = trial_seeds(config.seed, n_lattices)
    rows, checks = [], []
    for i, seed in enumerate(seeds):
        rng = make_rng(seed)
        n = int(rng.integers(2, 5))
        lat = random_promise_lattice(rng, beta, yes=bool(i % 2 == 0), n=n)
        chk = check_reduction(lat, beta)
        checks.append(chk)
        rows.append([seed, f"lattice-{i}", n, chk.truth.value, repr(chk.lambda1), repr(min(chk.distances)),
                     int(chk.holds)])
    rate = sum(c.holds for c in checks) / n_lattices
    return ExperimentResult("reduction", rate, rate == 1.0, _csv(REDUCTION_COLUMNS, rows), checks,
                            {"exceptions": sum(not c.holds for c in checks)})


def _pd_audit_experiment(config, instance, witness, w, suppress) -> ExperimentResult:
    from .pd import PDFunctionView, no_pd_certificate

    inst, grid = instance or default_yes_instance()
    lattice = inst.lattice
    w = tuple(w) if w is not None else (4,) + (0,) * (lattice.n - 1)
    if suppress is not None:
        h = PDFunctionView.suppressed_gaussian(lattice, grid, w, suppress)
    else:
        h = PDFunctionView.from_witness(witness or build_honest_witness(lattice, grid), lattice, grid)
    cert = no_pd_certificate(h, w, rng=make_rng(config.seed))
    found = cert.violation_found
    return ExperimentResult("pd-audit", 0.0 if found else 1.0, not found, cert.to_csv(h), [cert],
                            {"bad_fraction": cert.bad_fraction, "flagged": cert.flagged,
                             "chain_min_eigenvalue": cert.chain_min_eigenvalue,
                             "cascade_bound": cert.cascade_bound, "gaussian_y": cert.gaussian_y})


def instance_from_file(lattice: Lattice, grid: GridSpec, target) -> Instance:
    if target is None:
        raise ValueError("lattice file has no target line")
    return Instance(lattice, tuple(to_fraction(a) for a in target), ell=grid.ell)
