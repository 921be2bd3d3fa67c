"""Pauli algebra, dense operators, the Hamiltonian model and the query oracle."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

MAX_QUBITS = 6
TIME_FLOOR = 1e-12
PAULI_LETTERS = "IXYZ"

TIME_REVERSAL = "time-reversal"
TIME_FORWARD = "time-forward"


class AccessModeViolation(RuntimeError):
    """A query incompatible with the oracle's access model was requested."""


class NegativeTimeForbidden(AccessModeViolation):
    """Negative evolution time requested from a forward-only oracle."""


class NormalizationViolation(ValueError):
    """The normalization Delta is too small for the Hamiltonian."""


_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, order=True)
class PauliString:
    """Tensor product of single-qubit Paulis; letters[0] acts on the most significant qubit."""

    letters: str

    def __post_init__(self):
        if not self.letters or any(c not in PAULI_LETTERS for c in self.letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    @property
    def index(self) -> int:
        """Base-4 index with I=0, X=1, Y=2, Z=3 and qubit 0 most significant."""
        k = 0
        for c in self.letters:
            k = 4 * k + PAULI_LETTERS.index(c)
        return k

    @classmethod
    def from_index(cls, k: int, n: int) -> "PauliString":
        digits = []
        for _ in range(n):
            digits.append(PAULI_LETTERS[k % 4])
            k //= 4
        return cls("".join(reversed(digits)))

    def xz_masks(self) -> tuple[int, int]:
        """Bit masks (x, z) over computational-basis indices, P = i^{x.z} X^x Z^z."""
        x = z = 0
        for q, c in enumerate(self.letters):
            bit = 1 << (self.n - 1 - q)
            if c in "XY":
                x |= bit
            if c in "ZY":
                z |= bit
        return x, z

    def matrix(self) -> np.ndarray:
        return pauli_matrix(self.letters)

    def __str__(self) -> str:
        return self.letters


@lru_cache(maxsize=8192)
def _pauli_matrix_cached(letters: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in letters:
        out = np.kron(out, _SINGLE[c])
    out.setflags(write=False)
    return out


def pauli_matrix(letters: str) -> np.ndarray:
    return _pauli_matrix_cached(letters)


def all_paulis(n: int) -> list[PauliString]:
    return [PauliString.from_index(k, n) for k in range(4**n)]


def _check_n(n: int) -> None:
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count {n} outside supported range 1..{MAX_QUBITS}")


@dataclass(frozen=True)
class SparseHamiltonian:
    """H = sum_a lambda_a E_a over distinct non-identity Pauli strings."""

    n: int
    terms: tuple[tuple[PauliString, float], ...]

    def __post_init__(self):
        _check_n(self.n)
        terms = tuple((p if isinstance(p, PauliString) else PauliString(p), float(c)) for p, c in self.terms)
        object.__setattr__(self, "terms", terms)
        seen = set()
        for p, c in terms:
            if p.n != self.n:
                raise ValueError(f"term {p} has length {p.n}, expected {self.n}")
            if p.is_identity:
                raise ValueError("identity term is not allowed")
            if p in seen:
                raise ValueError(f"duplicate term {p}")
            if abs(c) > 1 + 1e-12:
                raise ValueError(f"coefficient {c} of {p} exceeds 1 in magnitude")
            seen.add(p)

    @classmethod
    def from_dict(cls, n: int, coeffs: dict) -> "SparseHamiltonian":
        return cls(n, tuple(coeffs.items()))

    @property
    def m(self) -> int:
        return len(self.terms)

    @property
    def paulis(self) -> list[PauliString]:
        return [p for p, _ in self.terms]

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=float)

    def as_dict(self) -> dict[PauliString, float]:
        return dict(self.terms)

    def l1_norm(self) -> float:
        return float(np.abs(self.coefficients).sum())

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def support(self, threshold: float = 0.0) -> set[PauliString]:
        """Terms with |lambda_a| > threshold."""
        return {p for p, c in self.terms if abs(c) > threshold}


def omega_state(n: int) -> np.ndarray:
    """Maximally entangled state 2^{-n/2} sum_b |b>|b> on 2n qubits."""
    _check_n(n)
    d = 2**n
    psi = np.zeros(d * d, dtype=complex)
    psi[np.arange(d) * (d + 1)] = 1 / np.sqrt(d)
    return psi


def hamiltonian_dense(H: SparseHamiltonian) -> np.ndarray:
    _check_n(H.n)
    out = np.zeros((2**H.n, 2**H.n), dtype=complex)
    for p, c in H.terms:
        out += c * p.matrix()
    return out


def fourier_coefficient(A: np.ndarray, P: PauliString) -> complex:
    """x_P = tr(P^dag A) / 2^n."""
    A = np.asarray(A)
    d = 2**P.n
    if A.shape != (d, d):
        raise ValueError(f"operator of shape {A.shape} does not match Pauli on {P.n} qubits")
    # Paulis are Hermitian so tr(P A) suffices
    return complex(np.einsum("ij,ji->", P.matrix(), A) / d)


def pauli_coefficients(A: np.ndarray) -> np.ndarray:
    """All 4^n Fourier coefficients of A, indexed by PauliString.index."""
    A = np.asarray(A, dtype=complex)
    d = A.shape[0]
    n = int(round(np.log2(d)))
    if A.shape != (d, d) or 2**n != d:
        raise ValueError("operator dimension must be a power of two")
    out = np.empty(4**n, dtype=complex)
    for k in range(4**n):
        out[k] = np.einsum("ij,ji->", pauli_matrix(PauliString.from_index(k, n).letters), A) / d
    return out


def traceless_part(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("traceless_part needs a square matrix")
    d = A.shape[0]
    return A - np.trace(A) / d * np.eye(d)


def is_unitary(U: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2) <= tol)


@dataclass
class CostLedger:
    """Accumulated query cost; the only mutable shared object."""

    t_total: float = 0.0
    N_exp: int = 0
    t_min_observed: float = float("inf")
    n_anc_max: int = 0
    query_count: int = 0
    negative_queries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, t: float, count: int = 1) -> None:
        """Record `count` queries of signed duration t."""
        if count <= 0:
            return
        a = abs(t)
        with self._lock:
            self.t_total += float(a) * count
            self.query_count += count
            if a >= TIME_FLOOR:
                self.t_min_observed = min(self.t_min_observed, a)
            if t < 0:
                self.negative_queries += count

    def add_experiments(self, count: int = 1) -> None:
        with self._lock:
            self.N_exp += count

    def note_ancillas(self, k: int) -> None:
        with self._lock:
            self.n_anc_max = max(self.n_anc_max, k)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "t_total": float(self.t_total),
                "N_exp": self.N_exp,
                "t_min_observed": None if np.isinf(self.t_min_observed) else float(self.t_min_observed),
                "n_anc_max": self.n_anc_max,
                "query_count": self.query_count,
                "negative_queries": self.negative_queries,
            }


class QueryOracle:
    """Black-box access to e^{-iHt} with cost accounting.

    Learner code must only use evolve/charge and the public cost ledger.
    The underscore accessors exist for the simulator backend and checks.
    """

    def __init__(self, hamiltonian: SparseHamiltonian, mode: str = TIME_REVERSAL, ledger: CostLedger | None = None):
        if mode not in (TIME_REVERSAL, TIME_FORWARD):
            raise ValueError(f"unknown access mode {mode!r}")
        self._hamiltonian = hamiltonian
        self.mode = mode
        self.ledger = ledger if ledger is not None else CostLedger()
        self.n = hamiltonian.n
        self._dense = hamiltonian_dense(hamiltonian)
        self._evals, self._evecs = np.linalg.eigh(self._dense)

    def _check_time(self, t: float) -> None:
        if self.mode == TIME_FORWARD and t < 0:
            raise NegativeTimeForbidden(f"time-forward oracle cannot evolve for t={t}")

    def _unitary(self, t: float) -> np.ndarray:
        """Exact e^{-iHt} without charging (simulator side)."""
        V = self._evecs
        return (V * np.exp(-1j * self._evals * t)) @ V.conj().T

    def evolve(self, t: float) -> np.ndarray:
        self._check_time(t)
        if abs(t) < TIME_FLOOR:
            return np.eye(2**self.n, dtype=complex)
        self.ledger.record(t)
        return self._unitary(t)

    def charge(self, t: float, count: int = 1) -> None:
        """Charge `count` queries of duration t without materializing them."""
        self._check_time(t)
        if abs(t) >= TIME_FLOOR:
            self.ledger.record(t, count)

    def charge_profile(self, profile: Iterable[tuple[float, int]], uses: int = 1) -> None:
        for t, count in profile:
            self.charge(t, count * uses)

    @property
    def _norm(self) -> float:
        return float(np.max(np.abs(self._evals)))


def evolve(oracle: QueryOracle, t: float) -> np.ndarray:
    """e^{-iHt} from the oracle, recording |t| on its ledger."""
    return oracle.evolve(t)


def random_instance(n: int, m: int, rng: np.random.Generator, gap: float = 0.2) -> SparseHamiltonian:
    """m distinct non-identity Paulis with coefficients uniform on [-1,-gap] U [gap,1]."""
    _check_n(n)
    if not 1 <= m <= 4**n - 1:
        raise ValueError(f"cannot draw {m} distinct non-identity Paulis on {n} qubits")
    if not 0 <= gap <= 1:
        raise ValueError("gap must lie in [0, 1]")
    idx = rng.choice(4**n - 1, size=m, replace=False) + 1
    mags = rng.uniform(gap, 1.0, size=m)
    signs = rng.choice([-1.0, 1.0], size=m)
    terms = tuple((PauliString.from_index(int(k), n), float(s * a)) for k, s, a in zip(idx, signs, mags))
    return SparseHamiltonian(n, terms)
