import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmalattice.autocorr import (
    GridMismatchError,
    apply_shift,
    autocorr_convergence,
    autocorr_g,
    autocorr_h,
    audit_sample_points,
    circuit_probability,
    gaussian_autocorr_audit,
)
from qmalattice.lattice import GridSpec, mu
from qmalattice.witness import QuantumWitness, build_adversarial_witness


def random_state(seed, shape=(8, 8)):
    rng = np.random.Generator(np.random.Philox(seed))
    s = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return s / np.linalg.norm(s)


def test_shift_semantics():
    s = np.arange(16.0).reshape(4, 4)
    t = apply_shift(s, (1, 3))
    for p in np.ndindex(4, 4):
        assert t[p] == s[(p[0] + 1) % 4, (p[1] + 3) % 4]


def test_shift_composition():
    s = random_state(0)
    assert np.array_equal(apply_shift(apply_shift(s, (2, 5)), (7, 4)), apply_shift(s, (1, 1)))


def test_shift_rejects_bad_vectors():
    s = random_state(0)
    with pytest.raises(GridMismatchError):
        apply_shift(s, (1,))
    with pytest.raises(GridMismatchError):
        apply_shift(s, (8, 0))


def test_unnormalised_state_rejected():
    with pytest.raises(ValueError):
        autocorr_g(2 * random_state(0), (0, 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 7), st.integers(0, 7))
def test_pure_state_identities(seed, a, b):
    s = random_state(seed)
    w = QuantumWitness.pure(s, 3)
    g = autocorr_g(s, (a, b))
    assert autocorr_g(s, (0, 0)) == pytest.approx(1.0, abs=1e-12)
    assert abs(g) <= 1 + 1e-12
    assert g == pytest.approx(autocorr_g(s, ((-a) % 8, (-b) % 8)), abs=1e-12)
    assert circuit_probability(w, (a, b)) == pytest.approx((1 - g) / 2, abs=1e-12)


def test_mixture_circuit_is_weighted(z15):
    g = GridSpec(5)
    a = QuantumWitness.pure(random_state(1, (32, 32)), 5)
    b = build_adversarial_witness("lattice_delta", z15, g)
    mix = QuantumWitness.mixture([(0.3, a), (0.7, b)])
    x = (5, 2)
    assert autocorr_h(mix, x) == pytest.approx(0.3 * autocorr_g(a.amplitudes, x))
    assert circuit_probability(mix, x) == pytest.approx((1 - autocorr_h(mix, x)) / 2, abs=1e-12)


def test_delta_witness_autocorrelation(z15):
    w = build_adversarial_witness("lattice_delta", z15, GridSpec(4))
    assert autocorr_h(w, (0, 0)) == 1.0
    assert autocorr_h(w, (1, 0)) == 0.0


def test_honest_target_autocorr_is_tiny(honest15):
    # the deep hole (64, 0) sits 7.5 away from every lattice point
    assert abs(autocorr_g(honest15.amplitudes, (64, 0))) < 1e-12
    assert circuit_probability(honest15, (64, 0)) == pytest.approx(0.5, abs=1e-12)


def test_honest_short_shift_matches_gaussian(honest15):
    x = (2, 1)
    norm = math.hypot(2, 1) * 15 / 128
    assert autocorr_g(honest15.amplitudes, x) == pytest.approx(mu(norm / 2), abs=1e-5)


def test_audit_report_and_csv(z15, grid7, honest15, rng):
    pts = audit_sample_points(z15, grid7, rng, n_samples=40)
    assert len(pts) == 40
    rep = gaussian_autocorr_audit(honest15.amplitudes, z15, grid7, pts)
    assert rep.max_deviation < 1e-4
    lines = rep.to_csv().splitlines()
    assert lines[0] == "x_coeffs,d_x_L,g,mu_half_tau,abs_dev"
    assert len(lines) == 41


def test_convergence_small(z15):
    dev = autocorr_convergence(z15, [5, 6], np.random.Generator(np.random.Philox(3)), n_samples=64)
    assert dev[6] < dev[5] < 1e-4
