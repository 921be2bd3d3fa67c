"""Block encodings: dilations, LCU composition, rescaling, residuals and amplification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import scipy.linalg

from .core import (
    TIME_FORWARD,
    AccessModeViolation,
    NormalizationViolation,
    QueryOracle,
    SparseHamiltonian,
    pauli_matrix,
)


class NormTooLarge(ValueError):
    pass


class MixedParameters(ValueError):
    pass


class TargetNormTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BlockEncoding:
    """Unitary on a ancillas (most significant) plus n system qubits.

    alpha * <0^a| U |0^a> approximates the target to spectral error eps_claimed.
    `reference` is the exact target, kept for verification only. `cost` lists
    (t, count) evolution queries consumed by one use of the encoding.
    """

    unitary: np.ndarray
    alpha: float
    a: int
    n: int
    eps_claimed: float = 0.0
    target_label: str = ""
    reference: np.ndarray | None = None
    cost: tuple[tuple[float, int], ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def block(self) -> np.ndarray:
        d = 2**self.n
        return self.unitary[:d, :d]

    def evolution_time(self) -> float:
        return float(sum(abs(t) * c for t, c in self.cost))

    def query_count(self) -> int:
        return int(sum(c for _, c in self.cost))


class EncodingAudit:
    """Records verification errors of every encoding built by a constructor."""

    def __init__(self):
        self.enabled = False
        self.records: list[tuple[str, float, float]] = []

    def add(self, B: BlockEncoding) -> None:
        if self.enabled and B.reference is not None:
            self.records.append((B.target_label, verify_encoding(B, B.reference), B.eps_claimed))

    def failures(self, tol: float = 1e-9) -> list[tuple[str, float, float]]:
        return [r for r in self.records if r[1] > r[2] + tol]


AUDIT = EncodingAudit()


def _register(B: BlockEncoding) -> BlockEncoding:
    AUDIT.add(B)
    return B


def _qubits(dim: int) -> int:
    k = int(round(math.log2(dim)))
    if 2**k != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return k


def verify_encoding(B: BlockEncoding, reference: np.ndarray) -> float:
    """Spectral-norm distance between reference and alpha * block."""
    reference = np.asarray(reference)
    if reference.shape != B.block.shape:
        raise ValueError(f"reference shape {reference.shape} does not match block {B.block.shape}")
    return float(np.linalg.norm(reference - B.alpha * B.block, 2))


def unitary_encoding(U: np.ndarray, label: str = "U", cost=()) -> BlockEncoding:
    """A unitary viewed as an exact (1, 0, 0) encoding of itself."""
    U = np.asarray(U, dtype=complex)
    return _register(BlockEncoding(U, 1.0, 0, _qubits(U.shape[0]), 0.0, label, U, tuple(cost)))


def contraction_dilation(M: np.ndarray) -> np.ndarray:
    """Unitary [[M, sqrt(I-MM^dag)], [sqrt(I-M^dag M), -M^dag]] for a contraction M."""
    W, s, Vh = np.linalg.svd(M)
    c = np.sqrt(np.clip(1 - s**2, 0, None))
    left = (W * c) @ W.conj().T
    right = (Vh.conj().T * c) @ Vh
    return np.block([[M, left], [right, -M.conj().T]])


def dilation_encoding(A: np.ndarray, alpha: float, label: str = "A") -> BlockEncoding:
    """Exact (alpha, 1, 0)-encoding of A by unitary completion of A/alpha."""
    A = np.asarray(A, dtype=complex)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    M = A / alpha
    norm = np.linalg.norm(M, 2)
    if norm > 1 + 1e-12:
        raise NormTooLarge(f"||A/alpha|| = {norm:.6g} exceeds 1")
    if norm > 1:
        M = M / norm
    U = contraction_dilation(M)
    return _register(BlockEncoding(U, float(alpha), 1, _qubits(A.shape[0]), 0.0, label, A))


def pad_ancillas(B: BlockEncoding, a_new: int) -> BlockEncoding:
    """Add idle ancillas (most significant); the block is unchanged."""
    if a_new < B.a:
        raise ValueError("cannot remove ancillas")
    if a_new == B.a:
        return B
    U = np.kron(np.eye(2 ** (a_new - B.a)), B.unitary)
    return replace(B, unitary=U, a=a_new)


def scaled(B: BlockEncoding, s: float, label: str | None = None) -> BlockEncoding:
    """Same circuit reinterpreted as an encoding of s * target."""
    ref = None if B.reference is None else B.reference * s
    return replace(B, alpha=B.alpha * s, eps_claimed=B.eps_claimed * s, reference=ref,
                   target_label=label or B.target_label)


def _unitary_with_first_column(v: np.ndarray) -> np.ndarray:
    D = len(v)
    k = int(np.argmax(np.abs(v)))
    cols = [v] + [np.eye(D)[:, j] for j in range(D) if j != k]
    Q, R = np.linalg.qr(np.column_stack(cols))
    return Q * np.concatenate([[R[0, 0]], np.ones(D - 1)])


@dataclass(frozen=True)
class StatePrepPair:
    prep_left: np.ndarray
    prep_right: np.ndarray
    beta: float
    b: int

    def weights(self) -> np.ndarray:
        """beta * c_j^* d_j for every basis index j."""
        return self.beta * self.prep_left[:, 0].conj() * self.prep_right[:, 0]


def state_prep_pair(y) -> StatePrepPair:
    y = np.asarray(y, dtype=complex).ravel()
    K = len(y)
    if K < 1:
        raise ValueError("need at least one coefficient")
    if not np.all(np.isfinite(y)):
        raise ValueError("coefficients must be finite")
    b = max(1, math.ceil(math.log2(max(K, 2))))
    beta = float(np.abs(y).sum())
    if beta == 0:
        raise ValueError("all coefficients are zero")
    amp = np.sqrt(np.abs(y) / beta)
    phase = np.angle(y)
    d = np.zeros(2**b, dtype=complex)
    c = np.zeros(2**b, dtype=complex)
    d[:K] = amp * np.exp(0.5j * phase)
    c[:K] = amp * np.exp(-0.5j * phase)
    return StatePrepPair(_unitary_with_first_column(c), _unitary_with_first_column(d), beta, b)


def lcu_encoding(encodings: list[BlockEncoding], y, eps1: float = 0.0, label: str | None = None) -> BlockEncoding:
    """(alpha*beta, a+b, alpha*eps1 + beta*eps2)-encoding of sum_j y_j A_j."""
    y = np.asarray(y, dtype=complex).ravel()
    if len(encodings) != len(y):
        raise ValueError("one coefficient per encoding required")
    first = encodings[0]
    for B in encodings[1:]:
        if not np.isclose(B.alpha, first.alpha, rtol=1e-12, atol=0) or B.a != first.a or B.n != first.n:
            raise MixedParameters("encodings must share alpha, ancilla count and system size")
    pair = state_prep_pair(y)
    D = first.unitary.shape[0]
    S = 2**pair.b
    sel = np.zeros((S * D, S * D), dtype=complex)
    for j in range(S):
        sel[j * D:(j + 1) * D, j * D:(j + 1) * D] = encodings[j].unitary if j < len(encodings) else np.eye(D)
    I = np.eye(D)
    U = np.kron(pair.prep_left.conj().T, I) @ sel @ np.kron(pair.prep_right, I)
    eps2 = max(B.eps_claimed for B in encodings)
    ref = None
    if all(B.reference is not None for B in encodings):
        ref = sum(yj * B.reference for yj, B in zip(y, encodings))
    cost = tuple(c for B in encodings for c in B.cost)
    meta = dict(first.meta)
    return _register(BlockEncoding(U, first.alpha * pair.beta, first.a + pair.b, first.n,
                                   first.alpha * eps1 + pair.beta * eps2,
                                   label or "LCU", ref, cost, meta))


def pauli_lcu_encoding(H_hat: SparseHamiltonian) -> BlockEncoding:
    """(||lambda||_1, ceil(log2 m), 0)-encoding of a Pauli sum."""
    terms = [(p, c) for p, c in H_hat.terms if c != 0]
    if not terms:
        return dilation_encoding(np.zeros((2**H_hat.n, 2**H_hat.n)), 1.0, label="0")
    units = [unitary_encoding(pauli_matrix(p.letters), str(p)) for p, _ in terms]
    return lcu_encoding(units, [c for _, c in terms], label="H_hat")


def _alternating(t: float, Q: int) -> tuple[tuple[float, int], ...]:
    return ((t, (Q + 1) // 2), (-t, Q // 2))


def _check_delta(oracle: QueryOracle, Delta: float) -> None:
    if Delta <= 0:
        raise ValueError("Delta must be positive")
    if 2 * oracle._norm > Delta * (1 + 1e-12):
        raise NormalizationViolation(f"Delta={Delta} is below 2||H|| = {2 * oracle._norm:.6g}")


def _hamiltonian_from_unitary(U: np.ndarray) -> np.ndarray:
    """Principal logarithm i*log(U) of a unitary with eigenphases inside (-pi, pi)."""
    T, Z = scipy.linalg.schur(U, output="complex")
    theta = -np.angle(np.diag(T))
    return (Z * theta) @ Z.conj().T


def arcsin_queries(eps: float, c_d: float = 4.0) -> int:
    return max(1, math.ceil(c_d * math.log(1 / eps)))


def arcsin_encoding(oracle: QueryOracle, Delta: float, eps: float, c_d: float = 4.0,
                    charge: bool = True) -> BlockEncoding:
    """(pi/2, 2, eps)-encoding of H/Delta.

    Realized as an exact dilation of the principal logarithm of e^{-iH/Delta};
    the ledger is charged for the arcsin polynomial circuit.
    """
    if oracle.mode == TIME_FORWARD:
        raise AccessModeViolation("arcsin encoding needs time-reversed queries")
    if not 0 < eps <= math.pi / 4:
        raise ValueError("eps must lie in (0, pi/4]")
    _check_delta(oracle, Delta)
    H_over = _hamiltonian_from_unitary(oracle._unitary(1 / Delta))
    H_over = (H_over + H_over.conj().T) / 2
    base = dilation_encoding(H_over, math.pi / 2, label="H/Delta")
    Q1 = arcsin_queries(eps, c_d)
    B = replace(pad_ancillas(base, 2), eps_claimed=eps, reference=oracle._dense / Delta,
                cost=_alternating(1 / Delta, Q1), meta={"Delta": Delta, "eps_arcsin": eps})
    if charge:
        oracle.charge_profile(B.cost)
    return _register(B)


def arcsin_taylor_coefficients(K: int) -> np.ndarray:
    """Odd Taylor coefficients of arcsin up to x^{2K+1}."""
    return np.array([math.comb(2 * k, k) / (4**k * (2 * k + 1)) for k in range(K + 1)])


def arcsin_approximant(degree: int):
    """Odd polynomial in the Chebyshev basis approximating (2/pi) arcsin(x).

    Built from the truncated Taylor series, so |P| <= 1 on [-1, 1].
    """
    K = (degree - 1) // 2
    coeffs = np.zeros(2 * K + 2)
    coeffs[1::2] = arcsin_taylor_coefficients(K) * 2 / math.pi
    return np.polynomial.Chebyshev.cast(np.polynomial.Polynomial(coeffs))


def arcsin_degree(eps: float, max_degree: int = 401) -> int:
    """Smallest odd degree whose approximant has sup error <= eps on [-1/2, 1/2]."""
    x = np.linspace(-0.5, 0.5, 2001)
    target = 2 / math.pi * np.arcsin(x)
    for d in range(1, max_degree + 1, 2):
        if np.max(np.abs(arcsin_approximant(d)(x) - target)) <= eps:
            return d
    raise ValueError("degree limit reached")


def arcsin_fourier_terms(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Orders j and coefficients y_j with sum_j y_j e^{-ijx} = sum_{k<=L} a_k sin^{2k+1}(x).

    Uses sin^{2k+1} = 4^{-k} sum_l (-1)^l C(2k+1, k-l) sin((2l+1)x); the l1 norm is
    at most sum_k a_k <= pi/2.
    """
    a = arcsin_taylor_coefficients(L)
    g = np.zeros(L + 1)
    for k in range(L + 1):
        for l in range(k + 1):
            g[l] += a[k] * (-1) ** l * math.comb(2 * k + 1, k - l) / 4**k
    orders, coeffs = [], []
    for l in range(L + 1):
        orders += [2 * l + 1, -(2 * l + 1)]
        coeffs += [0.5j * g[l], -0.5j * g[l]]
    return np.array(orders), np.array(coeffs)


def arcsin_fourier_order(eps: float, radius: float = 0.5) -> int:
    """Smallest L whose truncated series errs by at most eps for |x| <= radius."""
    s = math.sin(radius)
    a_sum = 0.0
    for L in range(200):
        a_sum += arcsin_taylor_coefficients(L)[-1] * s ** (2 * L + 1)
        if math.asin(s) - a_sum <= eps:
            return L
    raise ValueError("order limit reached")


def fourier_arcsin_encoding(oracle: QueryOracle, Delta: float, eps: float, charge: bool = True) -> BlockEncoding:
    """(pi/2, b+1, eps)-encoding of H/Delta as an LCU of U^j, odd j of both signs.

    Unlike arcsin_encoding this is an explicit query circuit, so its queries
    can be controlized one by one.
    """
    if oracle.mode == TIME_FORWARD:
        raise AccessModeViolation("the Fourier arcsin series needs negative powers of U")
    _check_delta(oracle, Delta)
    L = arcsin_fourier_order(eps)
    orders, y = arcsin_fourier_terms(L)
    units = [unitary_encoding(oracle._unitary(j / Delta), f"U^{j}") for j in orders]
    B = lcu_encoding(units, y, label="H/Delta")
    B = rescale_encoding(replace(B, reference=oracle._dense / Delta, eps_claimed=eps), 1.0)
    B = replace(B, cost=tuple((j / Delta, 1) for j in orders),
                meta={"Delta": Delta, "eps_arcsin": eps, "orders": tuple(int(j) for j in orders),
                      "coefficients": y})
    if charge:
        oracle.charge_profile(B.cost)
    return _register(B)


def matrix_log_coefficients_exact(K: int) -> list[Fraction]:
    if not 1 <= K <= 40:
        raise ValueError("K must lie in 1..40")
    c = [-sum(Fraction(1, k) for k in range(1, K + 1))]
    c += [Fraction((-1) ** (j + 1) * math.comb(K, j), j) for j in range(1, K + 1)]
    return c


def matrix_log_coefficients(K: int) -> tuple[np.ndarray, float]:
    """Coefficients c_j of L_K(U) = sum_j c_j U^j and their l1 norm Lambda."""
    c = matrix_log_coefficients_exact(K)
    return np.array([float(x) for x in c]), float(sum(abs(x) for x in c))


def log_series(U: np.ndarray, K: int) -> np.ndarray:
    """L_K(U) = sum_{k<=K} (-1)^{k+1} (U - I)^k / k."""
    D = U.shape[0]
    X = U - np.eye(D)
    out = np.zeros_like(X)
    P = np.eye(D, dtype=complex)
    for k in range(1, K + 1):
        P = P @ X
        out += (-1) ** (k + 1) * P / k
    return out


def truncation_error_bound(r: float, K: int) -> float:
    if not 0 <= r < 1:
        raise ValueError("r must lie in [0, 1)")
    return r ** (K + 1) / ((K + 1) * (1 - r))


def log_order(Delta: float, eps: float) -> int:
    """Series order K = ceil(log2(Delta/eps))."""
    return max(1, math.ceil(math.log2(Delta / eps)))


def matrix_log_encoding(oracle: QueryOracle, Delta: float, K: int, charge: bool = True) -> BlockEncoding:
    """(Lambda, ceil(log2(K+1)), 2^{-(K+1)})-encoding of H/Delta from forward evolutions only."""
    _check_delta(oracle, Delta)
    c, Lam = matrix_log_coefficients(K)
    powers = [unitary_encoding(oracle._unitary(j / Delta), f"U^{j}") for j in range(K + 1)]
    B = lcu_encoding(powers, 1j * c, label="H/Delta")
    B = replace(B, eps_claimed=2.0 ** -(K + 1), reference=oracle._dense / Delta,
                cost=tuple((j / Delta, 1) for j in range(1, K + 1)),
                meta={"Delta": Delta, "K": K, "Lambda": Lam})
    if charge:
        oracle.charge_profile(B.cost)
    return _register(B)


def rescale_encoding(B: BlockEncoding, Delta: float) -> BlockEncoding:
    """Raise the subnormalization of an encoding of H_hat to Delta*pi/2 with one extra ancilla."""
    ratio = 2 * B.alpha / (math.pi * Delta)
    if not np.any(B.block):
        ratio = 0.0  # the zero block rescales to zero at any Delta
    if not 0 <= ratio <= 1 + 1e-12:
        raise ValueError(f"rescale ratio {ratio:.6g} outside [0, 1]")
    theta = 2 * math.acos(min(ratio, 1.0))
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    D = B.unitary.shape[0]
    ctrl = np.zeros((2 * D, 2 * D), dtype=complex)
    ctrl[:D, :D] = B.unitary
    ctrl[D:, D:] = np.eye(D)
    rot = np.kron(np.array([[c, -s], [s, c]]), np.eye(D))
    out = BlockEncoding(rot @ ctrl, Delta * math.pi / 2, B.a + 1, B.n, B.eps_claimed,
                        B.target_label, B.reference, B.cost, dict(B.meta, theta=theta))
    return _register(out)


def residual_encoding(B_H: BlockEncoding, H_hat: SparseHamiltonian, Delta: float) -> BlockEncoding:
    """(pi, q, 2 eps)-encoding of (H - H_hat)/Delta from a (pi/2)-encoding of H/Delta."""
    if not np.isclose(B_H.alpha, math.pi / 2):
        raise MixedParameters("B_H must be normalized to alpha = pi/2")
    B_hat = scaled(rescale_encoding(pauli_lcu_encoding(H_hat), Delta), 1 / Delta, "H_hat/Delta")
    a = max(B_H.a, B_hat.a)
    B = lcu_encoding([pad_ancillas(B_H, a), pad_ancillas(B_hat, a)], [1, -1], label="R/Delta")
    return _register(replace(B, cost=B_H.cost, meta=dict(B_H.meta)))


def amplification_queries(eta: float, eps: float, eps_amp: float, c_amp: float = 2.0) -> int:
    return max(1, math.ceil(c_amp * math.log(1 / eps) * math.log(1 / eps_amp) / eta))


def amplify(B_R: BlockEncoding, eta: float, eps_amp: float, *, eps: float | None = None,
            Delta: float | None = None, c_amp: float = 2.0, oracle: QueryOracle | None = None,
            charge: bool = True) -> BlockEncoding:
    """(2, q+2, eps/eta + eps_amp)-encoding of R/(eta*Delta), realized as a dilation.

    The ledger cost is the amplification circuit's query count at duration 1/Delta.
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    T = B_R.alpha * B_R.block / (2 * eta)
    normT = np.linalg.norm(T, 2)
    if normT > 0.5 + 1e-9:
        raise TargetNormTooLarge(f"||T|| = {normT:.6g} exceeds 1/2")
    if np.allclose(B_R.block, B_R.block.conj().T, atol=1e-12):
        T = (T + T.conj().T) / 2
    eps = eps if eps is not None else B_R.meta.get("eps_arcsin", B_R.eps_claimed)
    Delta = Delta if Delta is not None else B_R.meta.get("Delta")
    base = dilation_encoding(T, 1.0, label="T")
    Q = amplification_queries(eta, eps, eps_amp, c_amp)
    cost = _alternating(1 / Delta, Q) if Delta else ()
    ref = None if B_R.reference is None else B_R.reference / eta
    B = replace(pad_ancillas(base, B_R.a + 2), alpha=2.0, eps_claimed=B_R.eps_claimed / eta + eps_amp,
                reference=ref, cost=cost, target_label="R/(eta*Delta)",
                meta=dict(B_R.meta, eta=eta, eps_amp=eps_amp))
    if charge and oracle is not None:
        oracle.charge_profile(B.cost)
    return _register(B)
