"""Bell sampling, uniform random Cliffords and classical-shadow estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import PauliString, omega_state, pauli_matrix


class DegenerateNormalizer(RuntimeError):
    """Normalizer estimate too small to divide by; more samples are needed."""


@dataclass(frozen=True)
class PseudoChoiState:
    """Pseudo-Choi statevector; the reference flag, when present, is the last qubit."""

    vector: np.ndarray
    with_reference: bool
    delta_effective: float
    n: int

    @property
    def num_qubits(self) -> int:
        return 2 * self.n + int(self.with_reference)


def pchoi_vector(A: np.ndarray, with_reference: bool) -> np.ndarray:
    """Normalized pseudo-Choi vector of the n-qubit operator A."""
    n = int(round(math.log2(A.shape[0])))
    omega = omega_state(n)
    branch = np.kron(A, np.eye(2**n)) @ omega
    if with_reference:
        psi = np.kron(branch, [1, 0]) + np.kron(omega, [0, 1])
    else:
        psi = branch
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("referenceless pseudo-Choi state of the zero operator does not exist")
    return psi / norm


# ---------------------------------------------------------------- Bell sampling

_BELL_LETTER = {(0, 0): "I", (0, 1): "X", (1, 0): "Z", (1, 1): "Y"}


def bell_probabilities(vector: np.ndarray, n: int) -> np.ndarray:
    """Born probabilities of the Bell basis {(P x I)|Omega>}, indexed by PauliString.index."""
    psi = np.asarray(vector, dtype=complex).reshape([2] * (2 * n))
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    for q in range(n):
        # CNOT from system qubit q onto its partner n+q, then Hadamard on q
        psi = np.moveaxis(psi, (q, n + q), (0, 1)).copy()
        psi[1] = psi[1][::-1].copy()
        psi = np.tensordot(h, psi, axes=(1, 0))
        psi = np.moveaxis(psi, (0, 1), (q, n + q))
    probs = np.abs(psi.reshape(-1)) ** 2
    out = np.zeros(4**n)
    for idx in np.nonzero(probs > 0)[0]:
        bits = [(idx >> (2 * n - 1 - k)) & 1 for k in range(2 * n)]
        letters = "".join(_BELL_LETTER[(bits[q], bits[n + q])] for q in range(n))
        out[PauliString(letters).index] += probs[idx]
    return out


def bell_sample(state: PseudoChoiState, rng: np.random.Generator) -> PauliString:
    if state.with_reference:
        raise ValueError("Bell sampling needs a referenceless state")
    p = bell_probabilities(state.vector, state.n)
    k = rng.choice(len(p), p=p / p.sum())
    return PauliString.from_index(int(k), state.n)


def bell_sample_counts(state: PseudoChoiState, count: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome histogram of `count` independent Bell measurements, indexed by PauliString.index."""
    if state.with_reference:
        raise ValueError("Bell sampling needs a referenceless state")
    p = bell_probabilities(state.vector, state.n)
    return rng.multinomial(count, p / p.sum())


# ---------------------------------------------------------------- Clifford sampling
# A Clifford is a product of Pauli rotations exp(i pi/4 P_h) whose symplectic
# action is the transvection v -> v + <v,h> h, followed by a random Pauli.
# Transvection vectors come from the canonical-index construction of the
# symplectic group, one level per qubit, so the result is exactly uniform.


@njit(cache=True, fastmath=True)
def _popcount(v):
    c = 0
    while v:
        v &= v - 1
        c += 1
    return c


@njit(cache=True, fastmath=True)
def _sym_inner(a, b, nn):
    t = 0
    for i in range(0, nn, 2):
        t += a[i] * b[i + 1] + b[i] * a[i + 1]
    return t & 1


@njit(cache=True, fastmath=True)
def _transvect(h, v, nn):
    if _sym_inner(h, v, nn):
        for i in range(nn):
            v[i] ^= h[i]


@njit(cache=True, fastmath=True)
def _find_transvection(x, y, nn, t0, t1, z):
    """Vectors t0, t1 with y = Z_t1 Z_t0 x (either may be zero)."""
    t0[:nn] = 0
    t1[:nn] = 0
    z[:nn] = 0
    same = True
    for i in range(nn):
        if x[i] != y[i]:
            same = False
    if same:
        return
    if _sym_inner(x, y, nn) == 1:
        for i in range(nn):
            t0[i] = x[i] ^ y[i]
        return
    for i in range(0, nn, 2):
        if (x[i] | x[i + 1]) and (y[i] | y[i + 1]):
            z[i] = x[i] ^ y[i]
            z[i + 1] = x[i + 1] ^ y[i + 1]
            if z[i] == 0 and z[i + 1] == 0:
                z[i + 1] = 1
                if x[i] != x[i + 1]:
                    z[i] = 1
            for j in range(nn):
                t0[j] = x[j] ^ z[j]
                t1[j] = y[j] ^ z[j]
            return
    for i in range(0, nn, 2):
        if (x[i] | x[i + 1]) and not (y[i] | y[i + 1]):
            if x[i] == x[i + 1]:
                z[i + 1] = 1
            else:
                z[i + 1] = x[i]
                z[i] = x[i + 1]
            break
    for i in range(0, nn, 2):
        if not (x[i] | x[i + 1]) and (y[i] | y[i + 1]):
            if y[i] == y[i + 1]:
                z[i + 1] = 1
            else:
                z[i + 1] = y[i]
                z[i] = y[i + 1]
            break
    for j in range(nn):
        t0[j] = x[j] ^ z[j]
        t1[j] = y[j] ^ z[j]


@njit(cache=True, fastmath=True)
def _clifford_masks(d, krow, brow, xs, zs, work):
    """Rotation masks of every canonical level; work is an int8 (6, 2d) scratch array."""
    f1 = work[0]
    e1 = work[1]
    t0 = work[2]
    t1 = work[3]
    h0 = work[4]
    z = work[5]
    for lvl in range(d):
        nl = d - lvl
        nn = 2 * nl
        kval = krow[lvl]
        bval = brow[lvl]
        for j in range(nn):
            f1[j] = (kval >> j) & 1
            e1[j] = 0
        e1[0] = 1
        _find_transvection(e1, f1, nn, t0, t1, z)
        h0[0] = 1
        h0[1] = 0
        for j in range(2, nn):
            h0[j] = (bval >> (j - 1)) & 1
        _transvect(t0, h0, nn)
        _transvect(t1, h0, nn)
        if bval & 1:
            f1[:nn] = 0
        for slot in range(4):
            vec = work[2 + slot] if slot < 3 else f1
            x = 0
            zz = 0
            for j in range(nl):
                bit = 1 << (d - 1 - (lvl + j))
                if vec[2 * j]:
                    x |= bit
                if vec[2 * j + 1]:
                    zz |= bit
            xs[lvl, slot] = x
            zs[lvl, slot] = zz


_IPOW = np.array([1, 1j, -1, -1j])


@njit(cache=True, fastmath=True)
def _rotate(psi, x, z, sign, parity, ipow):
    """psi <- exp(sign * i pi/4 P) psi in place, for P = i^{x.z} X^x Z^z."""
    if x == 0 and z == 0:
        return
    c = sign * 1j * ipow[_popcount(x & z) & 3]
    r = 1 / np.sqrt(2.0)
    D = psi.shape[0]
    if x == 0:
        up = (1 + c) * r
        dn = (1 - c) * r
        for k in range(D):
            if parity[z & k]:
                psi[k] *= dn
            else:
                psi[k] *= up
        return
    for k in range(D):
        kk = k ^ x
        if k < kk:
            a = psi[k]
            b = psi[kk]
            sa = 1 - 2 * parity[z & kk]
            sb = 1 - 2 * parity[z & k]
            psi[k] = (a + c * sa * b) * r
            psi[kk] = (b + c * sb * a) * r


@njit(cache=True, fastmath=True)
def _apply_clifford(psi, tmp, xs, zs, px, pz, parity, ipow):
    d = xs.shape[0]
    for lvl in range(d - 1, -1, -1):
        for slot in range(4):
            _rotate(psi, xs[lvl, slot], zs[lvl, slot], 1.0, parity, ipow)
    D = psi.shape[0]
    for k in range(D):
        kk = k ^ px
        tmp[k] = (1 - 2 * parity[pz & kk]) * psi[kk]
    psi[:] = tmp


@njit(cache=True, fastmath=True)
def _clifford_adjoint_basis(b, out, tmp, xs, zs, px, pz, parity, ipow):
    """out <- C^dag |b>."""
    out[:] = 0
    bb = b ^ px
    out[bb] = 1 - 2 * parity[pz & bb]
    d = xs.shape[0]
    for lvl in range(d):
        for slot in range(3, -1, -1):
            _rotate(out, xs[lvl, slot], zs[lvl, slot], -1.0, parity, ipow)


@njit(cache=True, fastmath=True)
def _shadow_kernel(states, state_idx, Ui, Uv, Vi, Vv, vu, kr, br, px, pz, ur, parity, ipow, out, outcomes):
    S = out.shape[0]
    d = kr.shape[1]
    D = states.shape[1]
    nops = Ui.shape[0]
    psi = np.empty(D, np.complex128)
    tmp = np.empty(D, np.complex128)
    svec = np.empty(D, np.complex128)
    xs = np.zeros((d, 4), np.int64)
    zs = np.zeros((d, 4), np.int64)
    work = np.zeros((6, 2 * d), np.int8)
    for s in range(S):
        _clifford_masks(d, kr[s], br[s], xs, zs, work)
        psi[:] = states[state_idx[s]]
        _apply_clifford(psi, tmp, xs, zs, px[s], pz[s], parity, ipow)
        total = 0.0
        for k in range(D):
            total += psi[k].real ** 2 + psi[k].imag ** 2
        target = ur[s] * total
        acc = 0.0
        b = D - 1
        for k in range(D):
            acc += psi[k].real ** 2 + psi[k].imag ** 2
            if acc > target:
                b = k
                break
        outcomes[s] = b
        _clifford_adjoint_basis(b, svec, tmp, xs, zs, px[s], pz[s], parity, ipow)
        for j in range(nops):
            vs = 0j
            su = 0j
            for t in range(Vi.shape[1]):
                vs += np.conj(Vv[j, t]) * svec[Vi[j, t]]
            for t in range(Ui.shape[1]):
                su += np.conj(svec[Ui[j, t]]) * Uv[j, t]
            out[s, j] = (D + 1) * vs * su - vu[j]


def _parity_table(D: int) -> np.ndarray:
    return np.array([bin(k).count("1") & 1 for k in range(D)], dtype=np.int64)


def _sparse_rows(M: np.ndarray):
    """Padded (index, value) arrays of the nonzero entries of each row."""
    nz = [np.flatnonzero(row) for row in M]
    L = max(1, max(len(z) for z in nz))
    idx = np.zeros((len(M), L), np.int64)
    val = np.zeros((len(M), L), np.complex128)
    for j, z in enumerate(nz):
        idx[j, :len(z)] = z
        val[j, :len(z)] = M[j, z]
    return idx, val


def clifford_draws(d: int, S: int, rng: np.random.Generator):
    """Random integers defining S uniform Cliffords on d qubits."""
    if not 1 <= d <= 13:
        raise ValueError("d must lie in 1..13")
    levels = np.arange(d)
    kr = rng.integers(1, 4 ** (d - levels), size=(S, d))
    br = rng.integers(0, 2 ** (2 * (d - levels) - 1), size=(S, d))
    px = rng.integers(0, 2**d, size=S)
    pz = rng.integers(0, 2**d, size=S)
    return kr.astype(np.int64), br.astype(np.int64), px.astype(np.int64), pz.astype(np.int64)


@dataclass(frozen=True)
class Clifford:
    """Uniformly random Clifford C = X^px Z^pz * prod of Pauli pi/4 rotations."""

    d: int
    xs: np.ndarray
    zs: np.ndarray
    px: int
    pz: int

    @classmethod
    def from_draws(cls, d, krow, brow, px, pz) -> "Clifford":
        xs = np.zeros((d, 4), np.int64)
        zs = np.zeros((d, 4), np.int64)
        _clifford_masks(d, np.asarray(krow, np.int64), np.asarray(brow, np.int64), xs, zs, np.zeros((6, 2 * d), np.int8))
        return cls(d, xs, zs, int(px), int(pz))

    def rotations(self) -> list[tuple[int, int]]:
        """Rotation masks in the order they act on a state."""
        return [(int(self.xs[l, s]), int(self.zs[l, s])) for l in range(self.d - 1, -1, -1) for s in range(4)
                if self.xs[l, s] or self.zs[l, s]]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = np.array(psi, dtype=complex)
        tmp = np.empty_like(psi)
        _apply_clifford(psi, tmp, self.xs, self.zs, self.px, self.pz, _parity_table(2**self.d), _IPOW)
        return psi

    def adjoint_basis(self, b: int) -> np.ndarray:
        D = 2**self.d
        out = np.empty(D, complex)
        tmp = np.empty(D, complex)
        _clifford_adjoint_basis(b, out, tmp, self.xs, self.zs, self.px, self.pz, _parity_table(D), _IPOW)
        return out

    def matrix(self) -> np.ndarray:
        D = 2**self.d
        return np.column_stack([self.apply(np.eye(D)[:, k]) for k in range(D)])

    def conjugate(self, x: int, z: int) -> tuple[int, int, int]:
        """C (X^x Z^z) C^dag = i^e X^x' Z^z'; returns (e, x', z')."""
        e = 0
        for hx, hz in self.rotations():
            # anticommuting P picks up i P_h P under conjugation by exp(i pi/4 P_h)
            if (_popcount(hx & z) + _popcount(hz & x)) & 1:
                # P_h = i^{hx.hz} X^hx Z^hz; Z^hz X^x = (-1)^{hz.x} X^x Z^hz
                e += 1 + _popcount(hx & hz) + 2 * _popcount(hz & x)
                x, z = x ^ hx, z ^ hz
        # final Pauli layer conjugation contributes a sign
        e += 2 * ((_popcount(self.pz & x) + _popcount(self.px & z)) & 1)
        return e % 4, x, z

    def tableau(self) -> np.ndarray:
        """Symplectic images of X_q, Z_q as rows (x bits, z bits, phase power)."""
        rows = []
        for q in range(self.d):
            bit = 1 << (self.d - 1 - q)
            for x, z in ((bit, 0), (0, bit)):
                rows.append(self.conjugate(x, z))
        return np.array(rows, dtype=np.int64)


def random_clifford(d: int, rng: np.random.Generator) -> Clifford:
    kr, br, px, pz = clifford_draws(d, 1, rng)
    return Clifford.from_draws(d, kr[0], br[0], px[0], pz[0])


@dataclass(frozen=True)
class ShadowSample:
    clifford: Clifford
    outcome: int


def collect_shadows(vector: np.ndarray, count: int, rng: np.random.Generator) -> list[ShadowSample]:
    """Measure `count` copies in uniformly random Clifford bases (reference path)."""
    d = int(round(math.log2(len(vector))))
    out = []
    for _ in range(count):
        C = random_clifford(d, rng)
        p = np.abs(C.apply(vector)) ** 2
        out.append(ShadowSample(C, int(rng.choice(len(p), p=p / p.sum()))))
    return out


# ---------------------------------------------------------------- decoding operators


@dataclass(frozen=True)
class DecodingOperator:
    """Rank-one operator |u><v| on a referenced pseudo-Choi register."""

    kind: str
    left_vector: np.ndarray
    right_vector: np.ndarray
    pauli: PauliString | None = None

    def expectation(self, vector: np.ndarray) -> complex:
        """<psi|u><v|psi>."""
        return complex(np.vdot(vector, self.left_vector) * np.vdot(self.right_vector, vector))


def decoding_operators(n: int, paulis) -> list[DecodingOperator]:
    """Term operators for each Pauli followed by the normalizer."""
    omega = omega_state(n)
    v = np.kron(omega, [0, 1]).astype(complex)
    ops = []
    for p in paulis:
        u = np.kron(np.kron(pauli_matrix(p.letters), np.eye(2**n)) @ omega, [1, 0])
        ops.append(DecodingOperator("term", u, v, p))
    ops.append(DecodingOperator("normalizer", v, v, None))
    return ops


def shadow_value(sample: ShadowSample, O: DecodingOperator) -> complex:
    s = sample.clifford.adjoint_basis(sample.outcome)
    D = len(s)
    return (D + 1) * np.vdot(O.right_vector, s) * np.vdot(s, O.left_vector) - np.vdot(O.right_vector, O.left_vector)


def median_of_means(values: np.ndarray, batches: int = 10) -> np.ndarray:
    """Median (real and imaginary parts separately) of contiguous batch means along axis 0."""
    values = np.asarray(values)
    if len(values) == 0:
        raise ValueError("no samples")
    batches = max(1, min(batches, len(values)))
    means = np.stack([c.mean(axis=0) for c in np.array_split(values, batches)])
    return _median_complex(means)


def _median_complex(means: np.ndarray) -> np.ndarray:
    return np.median(means.real, axis=0) + 1j * np.median(means.imag, axis=0)


def shadow_estimate(samples: list[ShadowSample], O: DecodingOperator, batches: int = 10) -> complex:
    if not samples:
        raise ValueError("empty sample list")
    vals = np.array([shadow_value(s, O) for s in samples])
    return complex(median_of_means(vals, batches))


class ShadowCollector:
    """Fast shadow values for many copies of a (possibly mixed) state.

    The state is an ensemble of pure vectors with weights; each copy draws one
    component, a uniform Clifford and a Born outcome, then evaluates every
    decoding operator from two statevector pushes.
    """

    def __init__(self, ops: list[DecodingOperator], vectors: np.ndarray, weights: np.ndarray | None = None):
        self.vectors = np.ascontiguousarray(np.atleast_2d(vectors), dtype=np.complex128)
        self.weights = None if weights is None else np.asarray(weights, float) / np.sum(weights)
        self.D = self.vectors.shape[1]
        self.d = int(round(math.log2(self.D)))
        self.U = np.ascontiguousarray([o.left_vector for o in ops], dtype=np.complex128)
        self.V = np.ascontiguousarray([o.right_vector for o in ops], dtype=np.complex128)
        self.vu = np.einsum("jk,jk->j", self.V.conj(), self.U)
        self.parity = _parity_table(self.D)
        self.Ui, self.Uv = _sparse_rows(self.U)
        self.Vi, self.Vv = _sparse_rows(self.V)

    def values(self, count: int, rng: np.random.Generator, return_outcomes: bool = False):
        kr, br, px, pz = clifford_draws(self.d, count, rng)
        ur = rng.random(count)
        if self.weights is None or len(self.vectors) == 1:
            idx = np.zeros(count, np.int64)
        else:
            idx = rng.choice(len(self.vectors), size=count, p=self.weights).astype(np.int64)
        out = np.empty((count, len(self.U)), np.complex128)
        outcomes = np.empty(count, np.int64)
        _shadow_kernel(self.vectors, idx, self.Ui, self.Uv, self.Vi, self.Vv, self.vu, kr, br, px, pz, ur, self.parity, _IPOW,
                       out, outcomes)
        if return_outcomes:
            return out, outcomes
        return out

    def estimate(self, count: int, batches: int, rng: np.random.Generator, chunk: int = 1 << 15) -> np.ndarray:
        """Median-of-means estimates over `count` copies without storing them all."""
        batches = max(1, min(batches, count))
        sums = np.zeros((batches, len(self.U)), np.complex128)
        edges = np.linspace(0, count, batches + 1).round().astype(np.int64)
        sizes = np.diff(edges)
        done = 0
        while done < count:
            m = min(chunk, count - done)
            vals = self.values(m, rng)
            which = np.searchsorted(edges, np.arange(done, done + m), side="right") - 1
            np.add.at(sums, which, vals)
            done += m
        return _median_complex(sums / sizes[:, None])


def lambda_from_shadows(o_a: complex, o_N: complex, scale: float, floor: float = 0.1) -> float:
    """scale * Re[o_a] / Re[o_N]."""
    if o_N.real < floor:
        raise DegenerateNormalizer(f"Re[o_N] = {o_N.real:.4g} below floor {floor}")
    return float(scale * o_a.real / o_N.real)
