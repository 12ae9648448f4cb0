import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmalattice.lattice import GridSpec, Lattice
from qmalattice.pd import (
    PDFunctionView,
    TestParams,
    triple_det_expansion,
    triple_det_floor,
    triple_gram,
    cascade_identity,
    classify_good,
    gaussian_approx_fraction,
    gram_matrix,
    halving_bound,
    halving_cascade,
    halving_relaxation,
    is_psd,
    min_eigenvalue,
    no_pd_certificate,
    triple_test,
)

Z_NO = Lattice.scaled_identity(2, Fraction(32, 3))
G_NO = GridSpec(7, 5)


@pytest.mark.parametrize("k", [1, 2, 3, 6, 10, 16])
def test_jacobi_matches_lapack(k):
    rng = np.random.Generator(np.random.Philox(k))
    for _ in range(10):
        A = rng.normal(size=(k, k))
        A = A + A.T
        assert min_eigenvalue(A) == pytest.approx(np.linalg.eigvalsh(A)[0], abs=1e-10)


def test_jacobi_on_diagonal_and_psd():
    assert min_eigenvalue(np.diag([3.0, -1.0, 2.0])) == -1.0
    X = np.random.Generator(np.random.Philox(0)).normal(size=(5, 3))
    assert is_psd(X @ X.T)


def test_jacobi_input_checks():
    with pytest.raises(ValueError):
        min_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        min_eigenvalue(np.eye(17))
    with pytest.raises(ValueError):
        min_eigenvalue(np.ones((2, 3)))


def three_by_three(a, b):
    return np.array([[1, a, b], [a, 1, a], [b, a, 1.0]])


@settings(max_examples=100, deadline=None)
@given(st.floats(-1, 1))
def test_halving_bound_is_the_psd_edge(b):
    a = halving_bound(b)
    # det of the Gram matrix on {0, x/2, x} factors as (1 - b)(1 + b - 2a^2)
    assert np.linalg.det(three_by_three(a, b)) == pytest.approx(0.0, abs=1e-9)
    assert halving_relaxation(b) >= a - 1e-12
    if b < 1 - 1e-6:
        assert min_eigenvalue(three_by_three(a + 1e-3, b)) < 0


def test_halving_domain():
    with pytest.raises(ValueError):
        halving_bound(1.5)
    with pytest.raises(ValueError):
        halving_relaxation(-2)
    with pytest.raises(ValueError):
        halving_cascade(0.0, -1)


@settings(max_examples=100, deadline=None)
@given(st.fractions(-1, 1), st.integers(0, 12))
def test_cascade_closed_form_exact(h0, k):
    assert cascade_identity(h0, k)
    assert isinstance(halving_cascade(h0, k), Fraction)


def test_cascade_example():
    assert halving_cascade(0.05, 2) == pytest.approx(0.940625)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(-1, 1))
def test_triple_det_expansion(alpha, beta, hy):
    assert triple_det_expansion(alpha, beta, hy) == pytest.approx(np.linalg.det(triple_gram(alpha, beta, hy)),
                                                                abs=1e-9)


def test_triple_det_floor_is_a_root():
    alpha, beta = 0.9, 0.85
    f = triple_det_floor(alpha, beta)
    assert triple_det_expansion(alpha, beta, f) == pytest.approx(0.0, abs=1e-12)
    assert triple_det_expansion(alpha, beta, f - 1e-3) < 0
    assert triple_det_expansion(alpha, beta, f + 1e-3) > 0


def test_gaussian_view_basics(z15, grid7):
    h = PDFunctionView.gaussian(z15, grid7)
    assert h.origin_value == 1.0
    assert h((3, 0)) == h((125, 0))
    assert h.norm((64, 0)) == pytest.approx(7.5)


def test_gram_of_honest_witness_is_psd(z15, grid7, honest15, rng):
    h = PDFunctionView.from_witness(honest15, z15, grid7)
    for _ in range(20):
        pts = [tuple(p) for p in rng.integers(0, 128, size=(5, 2))]
        M = gram_matrix(h, pts)
        assert np.allclose(M, M.T, atol=1e-12)
        assert min_eigenvalue(M) >= -1e-8


def test_from_witness_grid_mismatch(z15, honest15):
    with pytest.raises(ValueError):
        PDFunctionView.from_witness(honest15, z15, GridSpec(6))


def test_classify_good_and_fraction():
    h = PDFunctionView.suppressed_gaussian(Z_NO, G_NO, (4, 0), 0.05)
    assert classify_good(h, (1, 1), 1e-3).is_good
    v = classify_good(h, (4, 0), 1e-3)
    assert not v.is_good and v.dev_half == pytest.approx(math.exp(-math.pi / 36) - 0.05)
    # (2, 0) doubles onto w, so it is bad through h(2x)
    assert not classify_good(h, (2, 0), 1e-3).is_good
    assert gaussian_approx_fraction(h, [(1, 1), (4, 0), (2, 0), (0, 3)], 1e-3) == 0.5
    with pytest.raises(ValueError):
        gaussian_approx_fraction(h, [], 1e-3)


def test_classify_flags_wrapping(z15, grid7):
    h = PDFunctionView.gaussian(z15, grid7)
    assert classify_good(h, (40, 0), 1e-3).wrapped  # 2x = 80 reduces to -48
    assert not classify_good(h, (20, 0), 1e-3).wrapped


def test_triple_test_gaussian_not_flagged():
    h = PDFunctionView.gaussian(Z_NO, G_NO)
    tr = triple_test(h, (0, 3), (1, 0), 1e-3)
    assert not tr.flagged and not tr.some_bad
    assert tr.hypothesis_violations == []
    assert tr.closed_form == pytest.approx(tr.gaussian_det4, abs=1e-12)
    assert tr.det4 == pytest.approx(tr.closed_form, abs=1e-9)


def test_triple_test_with_cascade_value_flagged():
    h = PDFunctionView.gaussian(Z_NO, G_NO)
    tr = triple_test(h, (0, 3), (1, 0), 1e-3, hy=0.940625)
    assert tr.flagged and tr.det4 < 0
    assert tr.hy == 0.940625


def test_triple_test_reports_hypotheses():
    h = PDFunctionView.gaussian(Z_NO, G_NO)
    tr = triple_test(h, (2, 9), (5, 0), 1e-3)
    assert len(tr.hypothesis_violations) == 3


def test_certificate_on_suppressed_table(rng):
    h = PDFunctionView.suppressed_gaussian(Z_NO, G_NO, (4, 0), 0.05)
    cert = no_pd_certificate(h, (4, 0), TestParams(n_triples=8), rng)
    assert cert.k == 2 and cert.y == (1, 0)
    assert cert.cascade_bound == pytest.approx(0.940625)
    assert cert.cascade_contradiction
    assert cert.a1_size == 2 and len(cert.triples) == 8
    assert cert.flagged == 8 and cert.bad_fraction > 0
    assert cert.chain_min_eigenvalue < -1e-6
    assert cert.violation_found
    header = cert.to_csv(h).splitlines()[0]
    assert header == "point_coeffs,role,h,mu_target,verdict,det4"


def test_certificate_on_honest_witness(z15, grid7, honest15, rng):
    h = PDFunctionView.from_witness(honest15, z15, grid7)
    cert = no_pd_certificate(h, (4, 0), TestParams(n_triples=8), rng)
    assert not cert.violation_found
    assert cert.bad_fraction == 0.0


def test_certificate_input_errors(z15, grid7):
    h = PDFunctionView.gaussian(z15, grid7)
    with pytest.raises(ValueError):
        no_pd_certificate(h, (0, 0))
    with pytest.raises(ValueError, match="not on the grid"):
        no_pd_certificate(h, (3, 0))
