"""Classical simulation of a quantum witness protocol for lattice non-approximability."""

from .autocorr import autocorr_g, autocorr_h, circuit_probability, gaussian_autocorr_audit
from .lattice import GridSpec, Instance, Lattice, Truth, closest_vector, mu, shortest_vector
from .pd import PDFunctionView, TestParams, min_eigenvalue, no_pd_certificate, triple_test
from .protocol import (
    MultiWitness,
    ProtocolConfig,
    TestDescriptor,
    TestKind,
    classify_instance,
    qma_amplified_verify,
    reduce_svp_to_cvp,
    run_experiment,
    super_verifier_sample,
)
from .sampling import make_rng, sample_ball_grid
from .witness import QuantumWitness, build_adversarial_witness, build_honest_witness

__version__ = "0.1.0"
