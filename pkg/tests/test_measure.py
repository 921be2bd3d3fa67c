import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamlearn.core import PauliString, SparseHamiltonian, hamiltonian_dense, omega_state, pauli_matrix, random_instance
from hamlearn.measure import (
    Clifford,
    DegenerateNormalizer,
    PseudoChoiState,
    ShadowCollector,
    bell_probabilities,
    bell_sample,
    clifford_draws,
    collect_shadows,
    decoding_operators,
    lambda_from_shadows,
    median_of_means,
    pchoi_vector,
    random_clifford,
    shadow_estimate,
    shadow_value,
)


def refless_state(terms, n):
    A = hamiltonian_dense(SparseHamiltonian.from_dict(n, terms))
    return PseudoChoiState(pchoi_vector(A, False), False, 1.0, n)


def is_signed_pauli(M, n):
    for P in itertools.product("IXYZ", repeat=n):
        c = np.trace(pauli_matrix("".join(P)) @ M) / 2**n
        if abs(abs(c) - 1) < 1e-9:
            return np.allclose(M, c * pauli_matrix("".join(P))) and abs(c.imag) < 1e-9
    return False


# ---------------------------------------------------------------- Bell sampling


def test_bell_single_term():
    s = refless_state({"Z": 0.3}, 1)
    rng = np.random.default_rng(0)
    assert all(bell_sample(s, rng) == PauliString("Z") for _ in range(50))


def test_bell_two_terms_frequencies():
    s = refless_state({"XI": 0.6, "ZZ": 0.8}, 2)
    rng = np.random.default_rng(1)
    draws = [bell_sample(s, rng) for _ in range(10_000)]
    for P, p in (("XI", 0.36), ("ZZ", 0.64)):
        f = sum(d == PauliString(P) for d in draws) / len(draws)
        assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / len(draws))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
def test_bell_probabilities_are_pauli_weights(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    p = bell_probabilities(pchoi_vector(A, False), n)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    # brute force Born rule in the Bell basis {(P x I)|Omega>}
    psi = pchoi_vector(A, False)
    omega = omega_state(n)
    for k in rng.choice(4**n, size=min(8, 4**n), replace=False):
        P = PauliString.from_index(int(k), n)
        amp = np.vdot(np.kron(P.matrix(), np.eye(2**n)) @ omega, psi)
        assert p[k] == pytest.approx(abs(amp) ** 2, abs=1e-12)


def test_bell_rejects_referenced_state():
    A = np.diag([0.5, -0.5])
    s = PseudoChoiState(pchoi_vector(A, True), True, 1.0, 1)
    with pytest.raises(ValueError):
        bell_sample(s, np.random.default_rng(0))


def test_referenceless_zero_operator():
    with pytest.raises(ValueError):
        pchoi_vector(np.zeros((2, 2)), False)


# ---------------------------------------------------------------- Cliffords


def _single_qubit_group():
    """The 24 single-qubit Cliffords mod phase, closed from H and S."""
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    S = np.diag([1, 1j])
    group = [np.eye(2, dtype=complex)]
    frontier = list(group)
    while frontier:
        new = []
        for g in frontier:
            for h in (H, S):
                c = h @ g
                if not any(_same_up_to_phase(c, x) for x in group):
                    group.append(c)
                    new.append(c)
        frontier = new
    return group


def _same_up_to_phase(A, B):
    k = np.argmax(np.abs(B))
    ph = A.flat[k] / B.flat[k]
    return abs(abs(ph) - 1) < 1e-9 and np.allclose(A, ph * B, atol=1e-9)


def test_single_qubit_uniformity():
    group = _single_qubit_group()
    assert len(group) == 24
    rng = np.random.default_rng(2)
    S = 100_000
    kr, br, px, pz = clifford_draws(1, S, rng)
    # classify by the images of X and Z (a faithful label mod phase)
    labels = {}
    counts = np.zeros(24, int)
    for g_i, g in enumerate(group):
        labels[_tableau_key(g)] = g_i
    for s in range(S):
        C = Clifford.from_draws(1, kr[s], br[s], px[s], pz[s])
        counts[labels[(C.conjugate(1, 0), C.conjugate(0, 1))]] += 1
    expected = S / 24
    sigma = math.sqrt(S * (1 / 24) * (23 / 24))
    assert np.all(np.abs(counts - expected) <= 4 * sigma)


def _tableau_key(g):
    out = []
    for x, z in ((1, 0), (0, 1)):
        P = pauli_matrix("X") if x else pauli_matrix("Z")
        M = g @ P @ g.conj().T
        for e, (xx, zz) in itertools.product(range(4), [(0, 0), (0, 1), (1, 0), (1, 1)]):
            Q = np.linalg.matrix_power(pauli_matrix("X"), xx) @ np.linalg.matrix_power(pauli_matrix("Z"), zz)
            if np.allclose(M, 1j**e * Q):
                out.append((e, xx, zz))
                break
    return tuple(out)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3))
def test_clifford_maps_paulis_to_signed_paulis(seed, d):
    rng = np.random.default_rng(seed)
    C1, C2 = random_clifford(d, rng), random_clifford(d, rng)
    M = C1.matrix()
    M12 = M @ C2.matrix()
    assert np.allclose(M.conj().T @ M, np.eye(2**d))
    for q in range(d):
        for letter in "XZ":
            P = pauli_matrix("I" * q + letter + "I" * (d - q - 1))
            assert is_signed_pauli(M @ P @ M.conj().T, d)
            assert is_signed_pauli(M12 @ P @ M12.conj().T, d)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 4))
def test_tableau_agrees_with_matrix(seed, d):
    rng = np.random.default_rng(seed)
    C = random_clifford(d, rng)
    M = C.matrix()
    x, z = int(rng.integers(0, 2**d)), int(rng.integers(0, 2**d))
    e, x2, z2 = C.conjugate(x, z)

    def xz(xm, zm):
        out = np.eye(1)
        for q in range(d):
            bit = 1 << (d - 1 - q)
            f = np.eye(2)
            if xm & bit:
                f = pauli_matrix("X") @ f
            if zm & bit:
                f = f @ pauli_matrix("Z")
            out = np.kron(out, f)
        return out

    assert np.allclose(M @ xz(x, z) @ M.conj().T, 1j**e * xz(x2, z2))


# ---------------------------------------------------------------- shadows


def test_normalizer_on_reference_state():
    n = 1
    vec = np.kron(omega_state(n), [0, 1]).astype(complex)
    rng = np.random.default_rng(4)
    samples = collect_shadows(vec, 4000, rng)
    O_N = decoding_operators(n, [])[-1]
    assert abs(shadow_estimate(samples, O_N) - 1) < 0.1


def test_term_expectation_half_z():
    A = 0.5 * pauli_matrix("Z")
    vec = pchoi_vector(A, True)
    ops = decoding_operators(1, [PauliString("Z")])
    assert ops[0].expectation(vec) == pytest.approx(0.4)
    vals = ShadowCollector(ops, vec).values(10_000, np.random.default_rng(5))
    mean, sd = vals[:, 0].mean(), vals[:, 0].std()
    assert abs(mean - 0.4) <= 5 * sd / 100


def test_reference_path_matches_kernel():
    rng = np.random.default_rng(6)
    A = hamiltonian_dense(random_instance(1, 2, rng)) / 2
    vec = pchoi_vector(A, True)
    ops = decoding_operators(1, [PauliString(p) for p in "XYZ"])
    samples = collect_shadows(vec, 3000, rng)
    slow = np.array([[shadow_value(s, O) for O in ops] for s in samples])
    fast = ShadowCollector(ops, vec).values(3000, rng)
    exact = np.array([O.expectation(vec) for O in ops])
    for vals in (slow, fast):
        err = np.abs(vals.mean(axis=0) - exact)
        assert np.all(err <= 5 * vals.std(axis=0) / math.sqrt(len(vals)) + 1e-12)


def test_variance_bound(rng):
    for _ in range(6):
        n = int(rng.integers(1, 4))
        H = random_instance(n, int(rng.integers(1, min(5, 4**n - 1) + 1)), rng)
        vec = pchoi_vector(hamiltonian_dense(H) / (2 * H.m), True)
        vals = ShadowCollector(decoding_operators(n, H.paulis), vec).values(5000, rng)
        assert np.max(np.var(vals, axis=0)) <= 6


def test_error_scaling_slope():
    rng = np.random.default_rng(7)
    A = hamiltonian_dense(random_instance(2, 2, rng)) / 4
    vec = pchoi_vector(A, True)
    ops = decoding_operators(2, [])
    col = ShadowCollector(ops, vec)
    exact = ops[-1].expectation(vec)
    sizes = np.array([100, 400, 1600, 6400])
    rms = []
    for S in sizes:
        errs = [abs(col.values(S, rng)[:, 0].mean() - exact) for _ in range(150)]
        rms.append(math.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    assert -0.6 <= slope <= -0.4


def test_mixed_ensemble_estimate(rng):
    A1, A2 = 0.3 * pauli_matrix("X"), -0.2 * pauli_matrix("Z")
    vecs = np.array([pchoi_vector(A1, True), pchoi_vector(A2, True)])
    w = np.array([0.25, 0.75])
    ops = decoding_operators(1, [PauliString("X"), PauliString("Z")])
    exact = np.array([sum(wk * O.expectation(v) for v, wk in zip(vecs, w)) for O in ops])
    est = ShadowCollector(ops, vecs, w).estimate(40_000, 5, rng)
    assert np.allclose(est, exact, atol=0.03)


def test_median_of_means():
    vals = np.array([1.0] * 9 + [1000.0])
    assert median_of_means(vals, 10) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        median_of_means(np.array([]))


def test_lambda_from_shadows_examples():
    Delta = 2 / math.pi
    assert lambda_from_shadows(0.4, 1.0, math.pi * Delta / 2) == pytest.approx(0.4)
    assert lambda_from_shadows(0.0, 0.7, 3.0) == 0.0
    with pytest.raises(DegenerateNormalizer):
        lambda_from_shadows(0.2, 0.01, 1.0)
