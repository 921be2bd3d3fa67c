import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamlearn import blockenc as be
from hamlearn.checks import lambda_bounds, log_series_polynomial
from hamlearn.core import (
    TIME_FORWARD,
    AccessModeViolation,
    NormalizationViolation,
    QueryOracle,
    SparseHamiltonian,
    hamiltonian_dense,
    pauli_coefficients,
    random_instance,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def is_unitary(U):
    return np.linalg.norm(U.conj().T @ U - np.eye(len(U)), 2) <= 1e-10


def oracle(terms, n=None, mode="time-reversal"):
    n = n or len(next(iter(terms)))
    return QueryOracle(SparseHamiltonian.from_dict(n, terms), mode)


# ---------------------------------------------------------------- dilation and LCU


def test_dilation_of_unitary():
    B = be.dilation_encoding(Z, 1.0)
    assert B.unitary.shape == (4, 4) and is_unitary(B.unitary)
    assert np.allclose(B.block, Z)


def test_dilation_half_x():
    B = be.dilation_encoding(0.5 * X, 1.0)
    assert is_unitary(B.unitary)
    assert np.allclose(B.block, 0.5 * X)
    # off-diagonal completion blocks are sqrt(I - A^dag A) = sqrt(3)/2 I here
    assert np.allclose(B.unitary[:2, 2:], np.sqrt(0.75) * np.eye(2))


def test_dilation_of_zero():
    B = be.dilation_encoding(np.zeros((2, 2)), 1.0)
    assert np.allclose(B.block, 0)
    assert np.allclose(B.unitary[:2, 2:], np.eye(2))


def test_dilation_rejects_large_norm():
    with pytest.raises(be.NormTooLarge):
        be.dilation_encoding(2 * Z, 1.0)


def test_lcu_single_term():
    B = be.lcu_encoding([be.unitary_encoding(Z)], [1.0])
    assert np.allclose(B.block, Z) and B.alpha == pytest.approx(1.0)


def test_lcu_cancellation():
    B = be.lcu_encoding([be.unitary_encoding(X), be.unitary_encoding(X)], [1, -1])
    assert np.linalg.norm(B.block, 2) <= 1e-9


def test_lcu_weighted_sum():
    XI, ZZ = np.kron(X, np.eye(2)), np.kron(Z, Z)
    B = be.lcu_encoding([be.unitary_encoding(XI), be.unitary_encoding(ZZ)], [0.6, 0.8])
    assert B.alpha == pytest.approx(1.4)
    assert np.allclose(B.block, (0.6 * XI + 0.8 * ZZ) / 1.4)
    assert is_unitary(B.unitary)


def test_lcu_mixed_parameters():
    with pytest.raises(be.MixedParameters):
        be.lcu_encoding([be.unitary_encoding(Z), be.dilation_encoding(0.5 * X, 1.0)], [1, 1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False), min_size=1, max_size=9))
def test_state_prep_pair_reproduces_coefficients(y):
    y = np.array(y)
    if np.abs(y).sum() < 1e-6:
        return
    pair = be.state_prep_pair(y)
    w = pair.weights()
    assert np.abs(w[:len(y)] - y).sum() <= 1e-9 * max(1, np.abs(y).sum())
    assert np.allclose(w[len(y):], 0, atol=1e-12)
    assert is_unitary(pair.prep_left) and is_unitary(pair.prep_right)


# ---------------------------------------------------------------- arcsin and Fourier routes


def test_arcsin_block_close_to_target():
    o = oracle({"Z": 0.4})
    B = be.arcsin_encoding(o, 1.0, 1e-3)
    assert B.alpha == pytest.approx(math.pi / 2)
    assert be.verify_encoding(B, 0.4 * Z) <= 1e-3


def test_arcsin_ledger():
    o = oracle({"Z": 0.4})
    Delta, eps = 2.0, 1e-2
    be.arcsin_encoding(o, Delta, eps)
    Q1 = be.arcsin_queries(eps)
    snap = o.ledger.snapshot()
    assert snap["query_count"] == Q1
    assert snap["t_total"] == pytest.approx(Q1 / Delta)
    assert snap["t_min_observed"] == pytest.approx(1 / Delta)


def test_arcsin_loosest_tolerance(rng):
    H = random_instance(2, 3, rng)
    o = QueryOracle(H)
    B = be.arcsin_encoding(o, 2 * H.m, math.pi / 4)
    assert be.verify_encoding(B, hamiltonian_dense(H) / (2 * H.m)) <= math.pi / 4 + 1e-9


def test_arcsin_needs_time_reversal():
    o = oracle({"Z": 0.4}, mode=TIME_FORWARD)
    with pytest.raises(AccessModeViolation):
        be.arcsin_encoding(o, 1.0, 1e-3)


def test_delta_too_small():
    with pytest.raises(NormalizationViolation):
        be.arcsin_encoding(oracle({"Z": 0.9}), 1.0, 1e-3)


def test_fourier_series_matches_arcsin():
    # oracle: (2/pi) arcsin(sin x) = 2x/pi on |x| <= 1/2, via sum_j y_j e^{-ijx}
    L = be.arcsin_fourier_order(1e-6)
    orders, y = be.arcsin_fourier_terms(L)
    x = np.linspace(-0.5, 0.5, 201)
    series = (y[None, :] * np.exp(-1j * np.outer(x, orders))).sum(axis=1)
    assert np.max(np.abs(series.real - x)) <= 1e-6
    assert np.max(np.abs(series.imag)) <= 1e-12
    assert np.abs(y).sum() <= math.pi / 2


@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_fourier_encoding(eps, rng):
    H = random_instance(2, 3, rng)
    o = QueryOracle(H)
    Delta = 2 * H.m
    B = be.fourier_arcsin_encoding(o, Delta, eps)
    assert B.alpha == pytest.approx(math.pi / 2)
    assert be.verify_encoding(B, hamiltonian_dense(H) / Delta) <= eps
    orders = B.meta["orders"]
    assert o.ledger.snapshot()["t_total"] == pytest.approx(sum(abs(j) for j in orders) / Delta)


def test_arcsin_degree_logarithmic():
    degs = [be.arcsin_degree(10.0**-k) for k in range(1, 6)]
    assert degs == sorted(degs)
    # frozen from the sup-norm search on [-1/2, 1/2]
    assert degs[0] <= 3 and degs[-1] <= 25


# ---------------------------------------------------------------- matrix logarithm


def test_matrix_log_k1():
    c, Lam = be.matrix_log_coefficients(1)
    assert np.allclose(c, [-1, 1]) and Lam == 2


def test_matrix_log_k3():
    exact = be.matrix_log_coefficients_exact(3)
    assert exact == [Fraction(-11, 6), Fraction(3), Fraction(-3, 2), Fraction(1, 3)]
    # independent float expansion of sum_k (-1)^{k+1} (x-1)^k / k
    P = np.polynomial.Polynomial
    ref = sum((-1) ** (k + 1) * P([-1, 1]) ** k / k for k in range(1, 4))
    assert np.allclose(ref.coef, [float(v) for v in exact])
    assert be.matrix_log_coefficients(3)[1] == pytest.approx(20 / 3)


def test_matrix_log_polynomial_identity():
    for K in range(1, 21):
        assert be.matrix_log_coefficients_exact(K) == log_series_polynomial(K)


def test_matrix_log_lambda_bounds():
    for K in range(1, 21):
        lo, hi = lambda_bounds(K)
        Lam = be.matrix_log_coefficients(K)[1]
        assert lo - 1e-12 <= Lam <= hi + 1e-12


def test_hockey_stick():
    for K in range(1, 21):
        for j in range(1, K + 1):
            assert sum(math.comb(k - 1, j - 1) for k in range(j, K + 1)) == math.comb(K, j)


def test_matrix_log_encoding_error():
    o = oracle({"Z": 0.5})
    B = be.matrix_log_encoding(o, 1.0, 4)
    assert be.verify_encoding(B, 0.5 * Z) <= 2**-5
    assert o.ledger.snapshot()["t_total"] == pytest.approx(10.0)
    assert o.ledger.snapshot()["negative_queries"] == 0


def test_matrix_log_encoding_k3():
    o = oracle({"X": 0.3, "Z": 0.4})
    B = be.matrix_log_encoding(o, 1.0, 3)
    assert be.verify_encoding(B, hamiltonian_dense(SparseHamiltonian.from_dict(1, {"X": 0.3, "Z": 0.4}))) <= 2**-4


def test_log_order():
    assert be.log_order(2.0, 0.05) == 6


def test_truncation_bound_values():
    assert be.truncation_error_bound(0.5, 4) == pytest.approx(0.0125)
    for K in range(1, 30):
        assert be.truncation_error_bound(0.5, K) <= 2.0 ** -(K + 1)
    assert be.truncation_error_bound(0.0, 5) == 0.0


# ---------------------------------------------------------------- rescale, residual, amplify


def test_rescale_identity_at_full_norm():
    Delta = 2 / math.pi
    B = be.dilation_encoding(Z, 1.0)
    R = be.rescale_encoding(B, Delta)
    assert R.meta["theta"] == pytest.approx(0.0, abs=1e-7)
    assert np.allclose(R.block, B.block)


def test_rescale_half_z():
    B = be.pauli_lcu_encoding(SparseHamiltonian.from_dict(1, {"Z": 0.5}))
    R = be.rescale_encoding(B, 2.0)
    assert R.alpha == pytest.approx(math.pi)
    assert np.allclose(R.block, 0.5 * Z / math.pi)


def test_rescale_zero():
    B = be.pauli_lcu_encoding(SparseHamiltonian(1, ()))
    for Delta in (0.5, 2.0, 8.0):
        assert np.allclose(be.rescale_encoding(B, Delta).block, 0)


def test_residual_of_perfect_estimate():
    H = SparseHamiltonian.from_dict(2, {"ZZ": 0.8, "XI": -0.3})
    o = QueryOracle(H)
    B_H = be.arcsin_encoding(o, 2.0, 1e-3, charge=False)
    B = be.residual_encoding(B_H, H, 2.0)
    assert np.linalg.norm(B.block, 2) <= 1e-8


def test_residual_value_and_cost():
    o = oracle({"ZZ": 0.8})
    B_H = be.arcsin_encoding(o, 2.0, 1e-3, charge=False)
    B = be.residual_encoding(B_H, SparseHamiltonian.from_dict(2, {"ZZ": 0.5}), 2.0)
    assert B.alpha == pytest.approx(math.pi)
    assert np.allclose(B.block * math.pi * 2.0, 0.3 * np.kron(Z, Z), atol=1e-8)
    assert B.cost == B_H.cost


def residual_of(R_over_delta):
    return be.dilation_encoding(R_over_delta, math.pi, label="R")


def test_amplify_unit_eta():
    A = 0.1 * X
    B = be.amplify(residual_of(A), 1.0, 1e-3, eps=1e-3, Delta=1.0)
    assert np.allclose(B.alpha * B.block, A)


def test_amplify_quarter():
    B = be.amplify(residual_of(0.1 * X), 0.25, 1e-3, eps=1e-3, Delta=1.0)
    assert np.linalg.norm(2 * B.block - 0.4 * X, 2) <= 1e-3


def test_amplify_cost_doubles():
    q = [be.amplification_queries(eta, 1e-3, 1e-3) for eta in (0.5, 0.25, 0.125)]
    assert q[1] == pytest.approx(2 * q[0], abs=1) and q[2] == pytest.approx(2 * q[1], abs=1)


def test_amplify_rejects_large_target():
    with pytest.raises(be.TargetNormTooLarge):
        be.amplify(residual_of(0.3 * X), 0.25, 1e-3, eps=1e-3, Delta=1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), eta=st.sampled_from([1.0, 0.5, 0.25, 0.125]))
def test_amplify_hermitian(seed, eta):
    rng = np.random.default_rng(seed)
    H = hamiltonian_dense(random_instance(2, 3, rng))
    A = H / np.linalg.norm(H, 2) * eta / math.pi * 0.99
    B = be.amplify(residual_of(A), eta, 1e-3, eps=1e-3, Delta=1.0)
    assert np.linalg.norm(B.block - B.block.conj().T, 2) <= 1e-9


# ---------------------------------------------------------------- verification and invariants


def test_verify_exact():
    B = be.dilation_encoding(Z, 1.0)
    assert be.verify_encoding(B, Z) <= 1e-12


def test_verify_detects_corruption():
    o = oracle({"Z": 0.5})
    be.AUDIT.enabled = False
    B = be.matrix_log_encoding(o, 1.0, 4, charge=False)
    U = B.unitary.copy()
    U[0, 0] += 0.3
    bad = replace(B, unitary=U)
    assert be.verify_encoding(bad, bad.reference) > bad.eps_claimed
    be.AUDIT.enabled = True


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 8))
def test_encodings_are_unitary_and_within_claim(seed, K):
    rng = np.random.default_rng(seed)
    H = random_instance(2, int(rng.integers(1, 5)), rng)
    o = QueryOracle(H)
    Delta = 2 * H.m
    for B in (be.matrix_log_encoding(o, Delta, K, charge=False),
              be.arcsin_encoding(o, Delta, 10.0**-K, charge=False)):
        assert is_unitary(B.unitary)
        assert be.verify_encoding(B, B.reference) <= B.eps_claimed + 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 6))
def test_holder_coefficient_bound(seed, K):
    rng = np.random.default_rng(seed)
    H = random_instance(2, int(rng.integers(1, 5)), rng)
    o = QueryOracle(H)
    Delta = 2 * H.m
    B = be.matrix_log_encoding(o, Delta, K, charge=False)
    H_tilde = B.alpha * B.block * Delta
    H_dense = hamiltonian_dense(H)
    gap = np.max(np.abs(pauli_coefficients(H_dense) - pauli_coefficients(H_tilde)))
    assert gap <= np.linalg.norm(H_dense - H_tilde, 2) + 1e-12
