"""Controlization of uncontrolled evolution by Pauli twirling and qDRIFT."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PauliString, QueryOracle, all_paulis, pauli_matrix, traceless_part

PARAM_TR = "param-TR"
PARAM_TF = "param-TF"
STRUCT_TR = "struct-TR"
STRUCT_TF = "struct-TF"
STAGES = (PARAM_TR, PARAM_TF, STRUCT_TR, STRUCT_TF)


@dataclass(frozen=True)
class ControlSpec:
    """Control string b; the control register sits above the system (most significant)."""

    b: str

    def __post_init__(self):
        if not 1 <= len(self.b) <= 3 or set(self.b) - {"0", "1"}:
            raise ValueError(f"control string must be 1..3 bits, got {self.b!r}")

    @property
    def k(self) -> int:
        return len(self.b)

    @property
    def index(self) -> int:
        return int(self.b, 2)


@dataclass(frozen=True)
class QDriftSequence:
    t: float
    N: int
    draws: tuple[PauliString, ...]
    spec: ControlSpec

    def __post_init__(self):
        if self.N < 1 or len(self.draws) != self.N:
            raise ValueError("need N >= 1 draws")

    def segment(self, P: PauliString, U_step: np.ndarray) -> np.ndarray:
        """ctrl-P (I x U) ctrl-P with P acting on every control branch except b."""
        C = _ctrl_pauli(self.spec, P.matrix())
        return C @ np.kron(np.eye(2**self.spec.k), U_step) @ C

    def unitary(self, U_step: np.ndarray) -> np.ndarray:
        out = np.eye(2**self.spec.k * U_step.shape[0], dtype=complex)
        for P in self.draws:
            out = self.segment(P, U_step) @ out
        return out


def _ctrl_pauli(spec: ControlSpec, P: np.ndarray) -> np.ndarray:
    K = 2**spec.k
    proj = np.zeros((K, K))
    proj[spec.index, spec.index] = 1
    return np.kron(np.eye(K) - proj, P) + np.kron(proj, np.eye(P.shape[0]))


def controlled(U: np.ndarray, spec: ControlSpec) -> np.ndarray:
    """|b><b| x U + (I - |b><b|) x I."""
    K = 2**spec.k
    proj = np.zeros((K, K))
    proj[spec.index, spec.index] = 1
    return np.kron(proj, U) + np.kron(np.eye(K) - proj, np.eye(U.shape[0]))


def twirled_hamiltonian(H: np.ndarray, spec: ControlSpec) -> np.ndarray:
    """Average of ctrl-P (I x H) ctrl-P over all n-qubit Paulis."""
    H = np.asarray(H, dtype=complex)
    n = int(round(math.log2(H.shape[0])))
    if n > 3:
        raise ValueError("twirl is materialized only for n <= 3")
    HI = np.kron(np.eye(2**spec.k), H)
    out = np.zeros_like(HI)
    for P in all_paulis(n):
        C = _ctrl_pauli(spec, P.matrix())
        out += C @ HI @ C
    return out / 4**n


def qdrift_sample(oracle: QueryOracle, t: float, N: int, spec: ControlSpec, rng: np.random.Generator,
                  draws=None) -> np.ndarray:
    """One random trajectory V_N ... V_1; the oracle is queried N times for t/N each."""
    if N < 1:
        raise ValueError("N must be >= 1")
    n = oracle.n
    if draws is None:
        draws = [PauliString.from_index(int(k), n) for k in rng.integers(0, 4**n, size=N)]
    draws = tuple(p if isinstance(p, PauliString) else PauliString(p) for p in draws)
    seq = QDriftSequence(t, N, draws, spec)
    out = np.eye(2 ** (spec.k + n), dtype=complex)
    for P in seq.draws:
        out = seq.segment(P, oracle.evolve(t / N)) @ out
    return out


def unitary_superop(V: np.ndarray) -> np.ndarray:
    """Row-major vectorization: vec(V rho V^dag) = (V x conj V) vec(rho)."""
    return np.kron(V, V.conj())


def choi_from_superop(S: np.ndarray) -> np.ndarray:
    """Normalized Choi state (E x id)(|Omega><Omega|), output register first."""
    D = int(round(math.sqrt(S.shape[0])))
    return S.reshape(D, D, D, D).transpose(0, 2, 1, 3).reshape(D * D, D * D) / D


def choi_of_unitary(V: np.ndarray) -> np.ndarray:
    return choi_from_superop(unitary_superop(V))


def qdrift_step_superop(H: np.ndarray, t: float, N: int, spec: ControlSpec) -> np.ndarray:
    """Pauli-averaged superoperator of one segment of duration t/N."""
    H = np.asarray(H, dtype=complex)
    n = int(round(math.log2(H.shape[0])))
    w, V = np.linalg.eigh(H)
    U_step = (V * np.exp(-1j * w * t / N)) @ V.conj().T
    UI = np.kron(np.eye(2**spec.k), U_step)
    D = UI.shape[0]
    S = np.zeros((D * D, D * D), dtype=complex)
    for P in all_paulis(n):
        C = _ctrl_pauli(spec, P.matrix())
        S += unitary_superop(C @ UI @ C)
    return S / 4**n


def qdrift_channel_superop(H: np.ndarray, t: float, N: int, spec: ControlSpec) -> np.ndarray:
    if (spec.k + int(round(math.log2(np.shape(H)[0])))) > 4:
        raise ValueError("exact qDRIFT superoperator limited to 4 qubits in total")
    return np.linalg.matrix_power(qdrift_step_superop(H, t, N, spec), N)


def qdrift_channel_choi(H: np.ndarray, t: float, N: int, spec: ControlSpec) -> np.ndarray:
    """Exact Choi state of the trajectory-averaged qDRIFT channel."""
    return choi_from_superop(qdrift_channel_superop(H, t, N, spec))


def target_control_choi(H: np.ndarray, t: float, spec: ControlSpec) -> np.ndarray:
    """Choi state of ctrl_b{exp(-i H_0 t)}."""
    H0 = traceless_part(H)
    w, V = np.linalg.eigh(H0)
    return choi_of_unitary(controlled((V * np.exp(-1j * w * t)) @ V.conj().T, spec))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = rho - sigma
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def controlization_error(H: np.ndarray, t: float, N: int, spec: ControlSpec) -> float:
    """Choi trace distance between the averaged qDRIFT channel and the ideal control."""
    return trace_distance(qdrift_channel_choi(H, t, N, spec), target_control_choi(H, t, spec))


def required_segments(stage: str, Delta: float, eps: float, c_N: float = 1.0) -> int:
    """Segments per controlled query for the given learning stage."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if not 0 < eps < 1 or Delta <= 0:
        raise ValueError("need eps in (0, 1) and Delta > 0")
    base = {PARAM_TR: Delta, PARAM_TF: Delta / eps, STRUCT_TR: Delta**2 / eps,
            STRUCT_TF: (Delta / eps) ** 4}[stage]
    return max(1, math.ceil(c_N * base * math.log(Delta / eps)))


def segments_for_error(t: float, norm: float, gamma: float) -> int:
    """Smallest N with t^2 ||H||^2 / N <= gamma."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return max(1, math.ceil(t * t * norm * norm / gamma))


# ------------------------------------------------------------ averaged controlized query
# Averaging over trajectories, a controlized query is block diagonal in the
# control register: the active branch sees U(t), every idle branch sees the
# same random unitary R with E[R] = mu I, and idle-idle coherences evolve
# under the n-qubit channel Phi = (Pauli-averaged conjugation by U(t/N))^N.


@dataclass(frozen=True)
class AveragedQuery:
    U: np.ndarray
    mu: complex
    phi: np.ndarray  # superoperator on the system, row-major vec


def averaged_query(U_step: np.ndarray, N: int) -> AveragedQuery:
    d = U_step.shape[0]
    n = int(round(math.log2(d)))
    mu = (np.trace(U_step) / d) ** N
    S1 = np.zeros((d * d, d * d), dtype=complex)
    for P in all_paulis(n):
        M = pauli_matrix(P.letters)
        S1 += unitary_superop(M @ U_step @ M)
    S1 /= 4**n
    return AveragedQuery(np.linalg.matrix_power(U_step, N), complex(mu), np.linalg.matrix_power(S1, N))


def apply_averaged_query(rho: np.ndarray, q: AveragedQuery, active: int, n_ctrl: int, n: int,
                         n_spec: int) -> np.ndarray:
    """Apply an averaged controlized query to a density matrix.

    Register order: n_ctrl control qubits, n system qubits, n_spec spectators.
    `active` is the control branch that receives U; all others are idle.
    """
    K, d, e = 2**n_ctrl, 2**n, 2**n_spec
    r = rho.reshape(K, d, e, K, d, e)
    out = np.empty_like(r)
    U, Uc = q.U, q.U.conj()
    phi = q.phi.reshape(d, d, d, d)
    for c in range(K):
        for c2 in range(K):
            blk = r[c, :, :, c2]
            if c == active and c2 == active:
                out[c, :, :, c2] = np.einsum("ij,jxmy,lm->ixly", U, blk, Uc)
            elif c == active:
                out[c, :, :, c2] = np.einsum("ij,jxmy->ixmy", U, blk) * np.conj(q.mu)
            elif c2 == active:
                out[c, :, :, c2] = q.mu * np.einsum("jxmy,lm->jxly", blk, Uc)
            else:
                out[c, :, :, c2] = np.einsum("iljm,jxmy->ixly", phi, blk)
    return out.reshape(rho.shape)
