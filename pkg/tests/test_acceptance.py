"""One test per acceptance criterion, each printing a PASS/FAIL line."""
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from qmalattice.autocorr import autocorr_convergence, autocorr_h, circuit_probability
from qmalattice.lattice import GridSpec, Lattice, gaussian_mass_check, grid_neg, grid_scale
from qmalattice.pd import (
    PDFunctionView,
    triple_det_expansion,
    triple_gram,
    gram_matrix,
    halving_bound,
    halving_relaxation,
    min_eigenvalue,
    no_pd_certificate,
)
from qmalattice.protocol import (
    ProtocolConfig,
    TestKind,
    Truth,
    default_no_instance,
    default_yes_instance,
    random_promise_lattice,
    reduce_svp_to_cvp,
    run_experiment,
    run_super_test,
    super_verifier_sample,
)
from qmalattice.sampling import make_rng, trial_seeds
from qmalattice.witness import build_adversarial_witness, build_honest_witness


def witness_suite(lattice, grid):
    """Honest witness plus three adversarial ones on the same grid."""
    shift = (3,) + (1,) * (lattice.n - 1)
    return [
        build_honest_witness(lattice, grid),
        build_adversarial_witness("wrong_width", lattice, grid, gamma=1.5),
        build_adversarial_witness("shifted", lattice, grid, shift=shift),
        build_adversarial_witness("random_phase", lattice, grid, seed=17),
    ]


@pytest.fixture(scope="module")
def suites(z15, lattice3):
    return [(z15, GridSpec(7), witness_suite(z15, GridSpec(7))),
            (lattice3, GridSpec(5), witness_suite(lattice3, GridSpec(5)))]


def test_ac1_circuit_formula(suites, acceptance_line):
    t0 = time.perf_counter()
    rng = make_rng(101)
    worst = 0.0
    for lattice, grid, witnesses in suites:
        shifts = rng.integers(0, grid.size, size=(200, lattice.n))
        for w in witnesses:
            for x in shifts:
                x = tuple(int(v) for v in x)
                worst = max(worst, abs(circuit_probability(w, x) - (1 - autocorr_h(w, x)) / 2))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed <= 10
    acceptance_line("AC1 circuit vs (1-h)/2", ok, f"max error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_ac2_pd_certification(suites, acceptance_line):
    t0 = time.perf_counter()
    rng = make_rng(202)
    min_eig, max_abs, max_asym, min_slack, min_relax = math.inf, 0.0, 0.0, math.inf, math.inf
    for lattice, grid, witnesses in suites:
        for w in witnesses:
            h = PDFunctionView.from_witness(w, lattice, grid)
            for _ in range(200):
                size = int(rng.integers(2, 7))
                pts = [tuple(int(v) for v in p) for p in rng.integers(0, grid.size, size=(size, lattice.n))]
                min_eig = min(min_eig, min_eigenvalue(gram_matrix(h, pts)))
            for y in rng.integers(0, grid.size, size=(1000, lattice.n)):
                y = tuple(int(v) for v in y)
                x = grid_scale(y, 2, grid)
                hx, hy = h(x), h(y)
                max_abs = max(max_abs, abs(hy) - 1)
                max_asym = max(max_asym, abs(hy - h(grid_neg(y, grid))))
                min_slack = min(min_slack, halving_bound(hx) - hy)
                min_relax = min(min_relax, halving_relaxation(hx) - hy)
    elapsed = time.perf_counter() - t0
    ok = (min_eig >= -1e-8 and max_abs <= 1e-9 and max_asym <= 1e-12 and min_slack >= -1e-8
          and min_relax >= -1e-8 and elapsed <= 30)
    acceptance_line("AC2 PD certification", ok,
                    f"min eig {min_eig:.2e}, |h|-1 {max_abs:.1e}, asym {max_asym:.1e}, "
                    f"3x3 slack {min_slack:.2e}, {elapsed:.1f}s")
    assert ok


def test_ac3_autocorr_convergence(z15, acceptance_line):
    t0 = time.perf_counter()
    dev = autocorr_convergence(z15, [5, 6, 7], make_rng(303), n_samples=512)
    elapsed = time.perf_counter() - t0
    ok = dev[7] <= 0.05 and dev[5] > dev[6] > dev[7] and elapsed <= 60
    acceptance_line("AC3 g vs mu(tau/2) convergence", ok,
                    ", ".join(f"m={m}: {d:.3e}" for m, d in dev.items()) + f", {elapsed:.1f}s")
    assert ok


def test_ac4_completeness(acceptance_line):
    t0 = time.perf_counter()
    res = run_experiment("completeness", ProtocolConfig(k=2000, p3=0.1, s_desk=0.05, seed=404), trials=1000)
    elapsed = time.perf_counter() - t0
    ok = res.accept_rate >= 0.99 and elapsed <= 60
    acceptance_line("AC4 completeness", ok, f"acceptance {res.accept_rate:.3f} over 1000 runs, {elapsed:.1f}s")
    assert ok


def test_ac5_soundness(acceptance_line):
    t0 = time.perf_counter()
    inst, grid = default_no_instance()
    w = build_adversarial_witness("honest_for_no_instance", inst.lattice, grid)
    desc = super_verifier_sample(inst, grid, ProtocolConfig(), make_rng(0), force=TestKind.TARGET_TEST)
    gap = abs(run_super_test(desc, w) - 0.5)
    forced = run_experiment("soundness", ProtocolConfig(seed=505), trials=1000, witness=w,
                            force=TestKind.TARGET_TEST)
    open_runs = run_experiment("soundness", ProtocolConfig(seed=505), trials=1000, witness=w)
    ok_a = gap >= 0.3 and 1 - forced.accept_rate >= 0.99

    lattice = Lattice.scaled_identity(2, Fraction(32, 3))
    h = PDFunctionView.suppressed_gaussian(lattice, GridSpec(7, 5), (4, 0), 0.05)
    cert = no_pd_certificate(h, (4, 0), rng=make_rng(506))
    ok_b = cert.bad_fraction > 0 and cert.chain_min_eigenvalue < -1e-6
    elapsed = time.perf_counter() - t0
    ok = ok_a and ok_b and elapsed <= 120
    acceptance_line("AC5 soundness", ok,
                    f"(a) |p-1/2| = {gap:.4f}, target-branch rejection {1 - forced.accept_rate:.3f}, "
                    f"unforced rejection {1 - open_runs.accept_rate:.3f}; "
                    f"(b) bad fraction {cert.bad_fraction:.3f}, flagged {cert.flagged}/{len(cert.triples)}, "
                    f"Gram min eig {cert.chain_min_eigenvalue:.3f}, {elapsed:.1f}s")
    assert ok


def brute_sq(B, x, span):
    """Oracle: min ||x - cB||^2 over a box of integer offsets around the rounded coefficients."""
    x = np.asarray(x, dtype=float)
    a = np.rint(x @ np.linalg.inv(B))
    offs = np.array(list(itertools.product(range(-span, span + 1), repeat=B.shape[0])))
    c = a + offs
    d = x - c @ B
    d2 = np.einsum("ij,ij->i", d, d)
    nz = np.any(c != 0, axis=1) if not x.any() else np.ones(len(c), bool)
    i = np.argmin(np.where(nz, d2, np.inf))
    return float(d2[i]), c[i].astype(int)


def oracle_span(B):
    # doubled per-coordinate bound for vectors up to the longest basis vector
    r = np.linalg.norm(B, axis=1).max()
    return int(2 * math.ceil(r * np.linalg.norm(np.linalg.inv(B), axis=0).max()))


def test_ac6_reduction(acceptance_line):
    t0 = time.perf_counter()
    beta = 2.0
    exceptions = 0
    counts = {Truth.YES: 0, Truth.NO: 0}
    for i, seed in enumerate(trial_seeds(606, 50)):
        rng = make_rng(seed)
        n = int(rng.integers(2, 5))
        L = random_promise_lattice(rng, beta, yes=i % 2 == 0, n=n)
        B = L.B
        span = oracle_span(B)
        lam2, u = brute_sq(B, np.zeros(n), span)
        truth = Truth.NO if lam2 <= 1 else Truth.YES if lam2 > beta**2 else Truth.UNPROMISED
        counts[truth] = counts.get(truth, 0) + 1
        mapped = reduce_svp_to_cvp(L)
        if truth is Truth.YES:
            good = all(brute_sq(m.lattice.B, m.target_point, oracle_span(m.lattice.B))[0] >= beta**2 - 1e-9
                       and brute_sq(m.lattice.B, np.zeros(n), oracle_span(m.lattice.B))[0] >= beta**2 - 1e-9
                       for m in mapped)
        elif truth is Truth.NO:
            odd = [j for j in range(n) if u[j] % 2]
            good = bool(odd) and any(
                brute_sq(mapped[j].lattice.B, mapped[j].target_point, oracle_span(mapped[j].lattice.B))[0]
                <= lam2 + 1e-9 for j in odd)
        else:
            good = False
        exceptions += not good
    ran = run_experiment("reduction", ProtocolConfig(seed=606), n_lattices=50, beta=beta)
    elapsed = time.perf_counter() - t0
    ok = exceptions == 0 and ran.diagnostics["exceptions"] == 0 and elapsed <= 60
    acceptance_line("AC6 reduction", ok, f"{counts[Truth.YES]} YES / {counts[Truth.NO]} NO lattices, "
                                         f"{exceptions} oracle exceptions, "
                                         f"{ran.diagnostics['exceptions']} driver exceptions, {elapsed:.1f}s")
    assert ok


def test_ac7_markov(acceptance_line):
    t0 = time.perf_counter()
    res = run_experiment("markov", ProtocolConfig(seed=707), trials=10_000)
    d = res.diagnostics
    elapsed = time.perf_counter() - t0
    diff = abs(d["mean_rprime"] - d["p_average_state"])
    ok = diff <= 3 * d["sigma"] and elapsed <= 30
    acceptance_line("AC7 mean r' vs averaged state", ok,
                    f"mean r' {d['mean_rprime']:.4f}, p(rho_bar) {d['p_average_state']:.4f}, "
                    f"|diff| {diff:.4f} <= 3 sigma {3 * d['sigma']:.4f}, {elapsed:.1f}s")
    assert ok


def test_ac8_gaussian_integrals(acceptance_line):
    t0 = time.perf_counter()
    t1, _ = gaussian_mass_check(1, 0.01)
    t2, ball2 = gaussian_mass_check(2, 0.01)
    elapsed = time.perf_counter() - t0
    ok = abs(t1 - 1) <= 1e-3 and abs(t2 - t1 * t1) <= 1e-6 and ball2 / t2 >= 0.99 and elapsed <= 5
    acceptance_line("AC8 Gaussian integrals", ok,
                    f"1-D total {t1:.6f}, product gap {abs(t2 - t1 * t1):.1e}, ball ratio {ball2 / t2:.5f}, "
                    f"{elapsed:.2f}s")
    assert ok


def test_ac9_determinant_identity(acceptance_line):
    t0 = time.perf_counter()
    rng = make_rng(909)
    worst = 0.0
    for _ in range(1000):
        alpha, beta = 1 - rng.random(2)  # in (0, 1]
        hy = rng.uniform(-1, 1)
        worst = max(worst, abs(triple_det_expansion(alpha, beta, hy) - np.linalg.det(triple_gram(alpha, beta, hy))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed <= 5
    acceptance_line("AC9 4x4 determinant expansion", ok, f"max error {worst:.2e}, {elapsed:.2f}s")
    assert ok
