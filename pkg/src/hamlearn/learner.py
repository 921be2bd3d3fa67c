"""Learning protocols built on pseudo-Choi states: structure, parameters, bootstrap, time-forward."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import blockenc as be
from .channels import (
    PARAM_TF,
    PARAM_TR,
    STRUCT_TF,
    STRUCT_TR,
    apply_averaged_query,
    averaged_query,
    required_segments,
    segments_for_error,
)
from .core import (
    TIME_FORWARD,
    TIME_REVERSAL,
    AccessModeViolation,
    PauliString,
    QueryOracle,
    SparseHamiltonian,
    all_paulis,
    hamiltonian_dense,
    omega_state,
    pauli_coefficients,
    pauli_matrix,
)
from .measure import (
    PseudoChoiState,
    ShadowCollector,
    bell_probabilities,
    decoding_operators,
    lambda_from_shadows,
    pchoi_vector,
)

GALACTIC = "galactic"
EXACT_CONTROL = "exact-control"
QDRIFT = "qdrift"


class CopyBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Constants:
    """Every constant hidden in an asymptotic bound, with its default."""

    c_d: float = 4.0  # arcsin circuit queries per log(1/eps)
    c_amp: float = 2.0  # amplification queries
    c_sh: float = 1.0  # shadow copies
    c_cc: float = 1.0  # coupon collector
    c_N: float = 1.0  # controlization segments
    c_enc: float = 0.1  # eps_arcsin = c_enc*eta/Delta, eps_amp = c_enc/(2 Delta)
    boost: float = 3.0  # median-of-means batches = ceil(boost*log(1/delta))
    c_prep: float = 1.0  # Bernoulli exponent in copies_to_queries
    trajectories: int = 128  # qDRIFT ensemble size per state family
    max_attempts: int = 10**11


@dataclass(frozen=True)
class LearnerConfig:
    epsilon: float = 0.1
    delta: float = 0.1
    m_bound: int = 4
    mode: str = TIME_REVERSAL
    p: float = 1.0
    controlization: str = EXACT_CONTROL
    gamma_ctrl: float | None = None  # None selects the stage formulas
    norm_known: float | None = None
    constants: Constants = field(default_factory=Constants)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if self.m_bound < 1:
            raise ValueError("m_bound must be positive")
        if self.mode not in (TIME_REVERSAL, TIME_FORWARD, GALACTIC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == GALACTIC and self.p < 1:
            raise ValueError("galactic mode needs p >= 1")
        if self.controlization not in (EXACT_CONTROL, QDRIFT):
            raise ValueError(f"unknown controlization {self.controlization!r}")
        if self.gamma_ctrl is not None and self.gamma_ctrl <= 0:
            raise ValueError("gamma_ctrl must be positive")


@dataclass(frozen=True)
class StructureEstimate:
    terms: frozenset
    threshold: float
    attempts: int = 0
    counts: dict = field(default_factory=dict)
    guaranteed: bool = True


@dataclass(frozen=True)
class ParameterEstimate:
    entries: dict
    epsilon: float
    delta: float
    copies: int = 0
    structure: frozenset = frozenset()
    history: tuple = ()

    def as_hamiltonian(self, n: int) -> SparseHamiltonian:
        clipped = {p: float(np.clip(v, -1, 1)) for p, v in self.entries.items()}
        return SparseHamiltonian(n, tuple(clipped.items()))

    def max_error(self, H: SparseHamiltonian) -> float:
        true = H.as_dict()
        keys = set(true) | set(self.entries)
        return max((abs(true.get(k, 0.0) - self.entries.get(k, 0.0)) for k in keys), default=0.0)


# ------------------------------------------------------------------ sources


@dataclass
class Source:
    """Everything needed to sample one pseudo-Choi family.

    attempt_probs[P]: probability that one referenceless attempt succeeds and
    its Bell measurement returns P. ref_*: post-selected referenced ensemble.
    scale: multiplier turning a Fourier coefficient of the block into the
    learned coefficient, so a single attempt succeeds with probability
    ||lambda||^2 / scale^2.
    """

    n: int
    scale: float
    cost: tuple
    ancillas: int
    attempt_probs: np.ndarray | None = None
    ref_vectors: np.ndarray | None = None
    ref_weights: np.ndarray | None = None
    ref_success: float = 1.0
    queries: int = 0
    gamma_ctrl: float = 0.0


def _ref_ensemble(blocks: np.ndarray, refs: np.ndarray | None):
    n = int(round(math.log2(blocks.shape[1])))
    d = 2**n
    omega = omega_state(n)
    vecs, probs = [], []
    for s, A in enumerate(blocks):
        W = np.eye(d) if refs is None else refs[s]
        psi = (np.kron(np.kron(A, np.eye(d)) @ omega, [1, 0]) + np.kron(np.kron(W, np.eye(d)) @ omega, [0, 1])) / math.sqrt(2)
        p = float(np.vdot(psi, psi).real)
        vecs.append(psi / math.sqrt(p))
        probs.append(p)
    probs = np.array(probs)
    return np.array(vecs), probs / probs.sum(), float(probs.mean())


def source_from_blocks(blocks, scale: float, cost, ancillas: int, refs=None, referenced: bool = True,
                       refless: bool = True, queries: int = 0, gamma_ctrl: float = 0.0) -> Source:
    """Source for an ensemble of equally likely encoded blocks (one block when exact)."""
    blocks = np.asarray(blocks, dtype=complex)
    if blocks.ndim == 2:
        blocks = blocks[None]
    n = int(round(math.log2(blocks.shape[1])))
    src = Source(n, float(scale), tuple(cost), ancillas, queries=queries, gamma_ctrl=gamma_ctrl)
    if refless:
        src.attempt_probs = np.mean([np.abs(pauli_coefficients(A)) ** 2 for A in blocks], axis=0)
    if referenced:
        src.ref_vectors, src.ref_weights, src.ref_success = _ref_ensemble(blocks, refs)
    return src


def source_from_encoding(B: be.BlockEncoding, **kw) -> Source:
    delta = B.meta.get("Delta", 1.0)
    return source_from_blocks(B.block, B.alpha * delta, B.cost, B.a + B.n, **kw)


def _ensemble_from_density(rho: np.ndarray, tol: float = 1e-13):
    w, V = np.linalg.eigh((rho + rho.conj().T) / 2)
    keep = w > tol * max(w.max(), 1e-300)
    return V[:, keep].T.copy(), w[keep]


# ------------------------------------------------------------------ single-copy preparation


def prepare_pchoi_ref(B: be.BlockEncoding, oracle: QueryOracle, rng: np.random.Generator,
                      max_attempts: int = 64) -> PseudoChoiState:
    """Repeat the flagged preparation until the ancillas read 0; charges every attempt."""
    A = B.block
    d = A.shape[0]
    p = 0.5 * (np.linalg.norm(A, "fro") ** 2 / d + 1)
    oracle.ledger.note_ancillas(B.a + 1 + B.n)
    for _ in range(max_attempts):
        oracle.charge_profile(B.cost)
        oracle.ledger.add_experiments(1)
        if rng.random() < p:
            return PseudoChoiState(pchoi_vector(A, True), True, B.alpha * B.meta.get("Delta", 1.0), B.n)
    raise CopyBudgetExhausted("referenced preparation failed too often")


def prepare_pchoi_refless(B: be.BlockEncoding, oracle: QueryOracle, rng: np.random.Generator):
    """One attempt; the state on success, None otherwise."""
    A = B.block
    d = A.shape[0]
    p = np.linalg.norm(A, "fro") ** 2 / d
    oracle.ledger.note_ancillas(B.a + B.n)
    oracle.charge_profile(B.cost)
    oracle.ledger.add_experiments(1)
    if p > 0 and rng.random() < p:
        return PseudoChoiState(pchoi_vector(A, False), False, B.alpha * B.meta.get("Delta", 1.0), B.n)
    return None


def copies_to_queries(N: int, p: float, c: float = 1.0) -> int:
    """Attempts that yield N successes except with probability e^{-cN}."""
    if N < 1 or not 0 < p <= 1 or c < 0:
        raise ValueError("need N >= 1, p in (0, 1] and c >= 0")
    return math.ceil(2 * (c + 1) * N / p)


# ------------------------------------------------------------------ structure and parameters


def structure_attempts(scale: float, gamma: float, delta: float, m_bound: int, c_cc: float = 1.0) -> int:
    """Attempts after which every term with |lambda| >= gamma has been seen w.p. 1 - delta.

    A term appears in a single attempt with probability lambda^2/scale^2.
    """
    return max(1, math.ceil(c_cc * math.log(max(m_bound, 1) / delta) * scale**2 / gamma**2))


def identify_structure(source: Source, gamma: float, delta: float, oracle: QueryOracle,
                       rng: np.random.Generator, m_bound: int = 1, c_cc: float = 1.0,
                       cap: int | None = None, max_attempts: int = 10**11) -> StructureEstimate:
    """Union of Bell outcomes over a coupon-collector budget of referenceless attempts."""
    if not 0 < gamma:
        raise ValueError("gamma must be positive")
    shift = source.scale * math.sqrt(source.queries * source.gamma_ctrl)
    guaranteed = shift <= gamma / 2
    gamma_eff = gamma - shift if guaranteed else gamma / 2
    Q = structure_attempts(source.scale, gamma_eff, delta, m_bound, c_cc)
    if Q > max_attempts:
        raise CopyBudgetExhausted(f"{Q} attempts exceed the cap {max_attempts}")
    probs = np.clip(source.attempt_probs, 0, None)
    tail = max(0.0, 1.0 - probs.sum())
    counts = rng.multinomial(Q, np.append(probs, tail) / (probs.sum() + tail))[:-1]
    oracle.charge_profile(source.cost, Q)
    oracle.ledger.add_experiments(Q)
    oracle.ledger.note_ancillas(source.ancillas)
    seen = {PauliString.from_index(int(k), source.n): int(counts[k]) for k in np.flatnonzero(counts) if k != 0}
    if cap is not None and len(seen) > cap:
        seen = dict(sorted(seen.items(), key=lambda kv: -kv[1])[:cap])
    return StructureEstimate(frozenset(seen), gamma, Q, seen, guaranteed)


def shadow_copies(scale: float, eps: float, n_terms: int, delta: float, c_sh: float = 1.0) -> int:
    return max(1, math.ceil(c_sh * scale**2 * math.log(max(n_terms, 1) / delta) / (eps / 2) ** 2))


def median_batches(delta: float, boost: float = 3.0) -> int:
    return max(1, math.ceil(boost * math.log(1 / delta)))


def estimate_parameters(terms, source: Source, eps: float, delta: float, oracle: QueryOracle,
                        rng: np.random.Generator, c_sh: float = 1.0, boost: float = 3.0,
                        copies: int | None = None) -> ParameterEstimate:
    """Classical-shadow estimates scale*Re[o_a]/Re[o_N] from referenced copies."""
    terms = sorted(terms)
    if not terms:
        return ParameterEstimate({}, eps, delta, 0)
    N = copies or shadow_copies(source.scale, eps, len(terms), delta, c_sh)
    attempts = N + int(rng.negative_binomial(N, source.ref_success)) if source.ref_success < 1 else N
    oracle.charge_profile(source.cost, attempts)
    oracle.ledger.add_experiments(attempts)
    oracle.ledger.note_ancillas(source.ancillas + 1)
    ops = decoding_operators(source.n, terms)
    col = ShadowCollector(ops, source.ref_vectors, source.ref_weights)
    o = col.estimate(N, median_batches(delta, boost), rng)
    entries = {P: lambda_from_shadows(o[j], o[-1], source.scale) for j, P in enumerate(terms)}
    return ParameterEstimate(entries, eps, delta, N, frozenset(terms))


def _prune(entries: dict, m_bound: int) -> dict:
    keep = sorted(entries.items(), key=lambda kv: -abs(kv[1]))[:m_bound]
    return {p: v for p, v in keep if v != 0}


# ------------------------------------------------------------------ controlization helpers


def _segments(stage: str, t: float, Delta: float, eps: float, cfg: LearnerConfig) -> int:
    if cfg.gamma_ctrl is not None:
        return segments_for_error(t, Delta / 2, cfg.gamma_ctrl)
    return required_segments(stage, Delta, eps, cfg.constants.c_N)


def _controlized_profile(profile, segs) -> tuple:
    """Each controlled query of duration t becomes N uncontrolled queries of t/N."""
    return tuple((t / N, c * N) for (t, c), N in zip(profile, segs))


def _gamma_ctrl(profile, segs, Delta: float) -> float:
    """Worst per-query controlization error t^2 ||H||^2 / N with ||H|| <= Delta/2."""
    return max((t * t * Delta * Delta / 4 / N for (t, _), N in zip(profile, segs)), default=0.0)


def trajectory_unitaries(oracle: QueryOracle, t: float, N: int, S: int, rng: np.random.Generator) -> np.ndarray:
    """S independent idle-branch products of N Pauli-conjugated steps U(t/N) (uncharged)."""
    n = oracle.n
    d = 2**n
    Ps = np.stack([pauli_matrix(P.letters) for P in all_paulis(n)])
    M = Ps @ oracle._unitary(t / N) @ Ps
    R = np.broadcast_to(np.eye(d, dtype=complex), (S, d, d)).copy()
    for draws in rng.integers(0, 4**n, size=(N, S)):
        R = M[draws] @ R
    return R


def controlized_lcu_blocks(oracle: QueryOracle, queries, weights, segs, S: int, rng: np.random.Generator):
    """Per-trajectory blocks sum_i w_i W_i of an LCU whose SEL queries are controlized.

    `queries` lists (branch, t) in circuit order. A query is active on its own
    index branch; every other branch, and the reference branch, picks up that
    query's idle unitary. Returns (blocks, reference unitaries).
    """
    d = 2**oracle.n
    eye = np.broadcast_to(np.eye(d, dtype=complex), (S, d, d))
    W = [eye.copy() for _ in weights]
    ref = eye.copy()
    for (branch, t), N in zip(queries, segs):
        R = trajectory_unitaries(oracle, t, N, S, rng)
        U = oracle._unitary(t)
        for i in range(len(W)):
            W[i] = (U @ W[i]) if i == branch else (R @ W[i])
        ref = R @ ref
    blocks = sum(w * Wi for w, Wi in zip(weights, W))
    return blocks, ref


def _clip_contraction(blocks: np.ndarray) -> np.ndarray:
    """Singular values above 1 saturate, as any bounded polynomial transform would."""
    out = blocks.copy()
    for s, A in enumerate(blocks):
        U, sv, Vh = np.linalg.svd(A)
        if sv[0] > 1:
            out[s] = (U * np.minimum(sv, 1)) @ Vh
    return out


def controlized_matrix_log_density(oracle: QueryOracle, Delta: float, K: int, segs, referenced: bool):
    """Exact trajectory-averaged output of the controlized matrix-log preparation.

    Registers: [reference] index system partner. Returns the unnormalized
    post-selected density matrix on [system partner (reference)].
    """
    n = oracle.n
    d = 2**n
    c, _ = be.matrix_log_coefficients(K)
    pair = be.state_prep_pair(1j * c)
    b = pair.b
    r = int(referenced)
    nc = r + b
    omega = omega_state(n)
    ctrl0 = np.zeros(2**nc, dtype=complex)
    if referenced:
        ctrl0[0] = ctrl0[2**b] = 1 / math.sqrt(2)
    else:
        ctrl0[0] = 1
    psi = np.kron(ctrl0, omega)
    rho = np.outer(psi, psi.conj())

    def prep(V):
        G = V if not referenced else np.block([[V, np.zeros_like(V)], [np.zeros_like(V), np.eye(2**b)]])
        return np.kron(G, np.eye(d * d))

    P = prep(pair.prep_right)
    rho = P @ rho @ P.conj().T
    for j in range(1, K + 1):
        q = averaged_query(oracle._unitary(j / Delta / segs[j - 1]), segs[j - 1])
        rho = apply_averaged_query(rho, q, j, nc, n, n)
    P = prep(pair.prep_left.conj().T)
    rho = P @ rho @ P.conj().T
    # post-select index 0 and move the reference qubit last
    r6 = rho.reshape(2**r, 2**b, d * d, 2**r, 2**b, d * d)[:, 0, :, :, 0, :]
    out = r6.transpose(1, 0, 3, 2).reshape(d * d * 2**r, d * d * 2**r)
    return out


def source_from_density(rho_refless, rho_ref, scale, cost, ancillas, n, queries=0, gamma_ctrl=0.0) -> Source:
    src = Source(n, float(scale), tuple(cost), ancillas, queries=queries, gamma_ctrl=gamma_ctrl)
    if rho_refless is not None:
        vecs, w = _ensemble_from_density(rho_refless)
        src.attempt_probs = sum(wk * bell_probabilities(v, n) for v, wk in zip(vecs, w))
    if rho_ref is not None:
        p = float(np.trace(rho_ref).real)
        vecs, w = _ensemble_from_density(rho_ref / p)
        src.ref_vectors, src.ref_weights, src.ref_success = vecs, w / w.sum(), p
    return src


# ------------------------------------------------------------------ time-reversal pipeline


def _check_promise(T_blocks: np.ndarray) -> None:
    norm = max(np.linalg.norm(T, 2) for T in T_blocks)
    if norm > 0.5 + 1e-9:
        raise be.TargetNormTooLarge(f"||T|| = {norm:.6g} exceeds 1/2")


def _tr_sources(oracle: QueryOracle, H_hat: SparseHamiltonian | None, eta: float, Delta: float,
                cfg: LearnerConfig, rng: np.random.Generator, round0: bool):
    """(referenceless source, referenced source) for one bootstrap round."""
    k = cfg.constants
    eps_arc = k.c_enc * eta / Delta
    eps_amp = k.c_enc / (2 * Delta)
    if cfg.controlization == EXACT_CONTROL:
        B_H = be.arcsin_encoding(oracle, Delta, eps_arc, c_d=k.c_d, charge=False)
        if round0:
            B = B_H
        else:
            B_R = be.residual_encoding(B_H, H_hat, Delta)
            B = be.amplify(B_R, eta, eps_amp, eps=eps_arc, Delta=Delta, c_amp=k.c_amp, charge=False)
        return source_from_encoding(B, referenced=False), source_from_encoding(B, refless=False)

    # qDRIFT: explicit Fourier-series LCU with U^j realized as |j| queries of
    # duration +-1/Delta; one trajectory ensemble per state family
    L = be.arcsin_fourier_order(eps_arc)
    orders, y = be.arcsin_fourier_terms(L)
    queries = [(i, math.copysign(1 / Delta, j)) for i, j in enumerate(orders) for _ in range(abs(j))]
    uses = 1 if round0 else max(1, math.ceil(k.c_amp * math.log(1 / eps_amp) / eta))
    H_blk = 0 if H_hat is None or round0 else 2 * hamiltonian_dense(H_hat) / (math.pi * Delta)
    a = max(1, math.ceil(math.log2(len(orders)))) + 1 + (0 if round0 else 3)
    out = []
    for stage, ref in ((STRUCT_TR, False), (PARAM_TR, True)):
        base = tuple((t, 1) for _, t in queries)
        segs = [_segments(stage, abs(t), Delta, cfg.epsilon, cfg) for _, t in queries]
        blocks, refs = controlized_lcu_blocks(oracle, queries, y, segs, k.trajectories, rng)
        A = 2 / math.pi * blocks
        if round0:
            scale = math.pi * Delta / 2
        else:
            A = math.pi * (A - H_blk) / (4 * eta)
            _check_promise(A.mean(axis=0)[None])
            A = _clip_contraction(A)
            scale = 2 * Delta
        cost = _controlized_profile(base, segs) * uses
        out.append(source_from_blocks(A, scale, cost, a + oracle.n, refs=refs, referenced=ref, refless=not ref,
                                      queries=len(queries) * uses, gamma_ctrl=_gamma_ctrl(base, segs, Delta)))
    return out[0], out[1]


def learn_residual(oracle: QueryOracle, H_hat: SparseHamiltonian, eta: float, zeta: float,
                   config: LearnerConfig, rng: np.random.Generator, Delta: float | None = None,
                   round0: bool = False):
    """One bootstrap round: new structure above eta/2 and residual estimates r' = (lambda - lambda_hat)/eta."""
    if oracle.mode != TIME_REVERSAL:
        raise AccessModeViolation("residual learning needs time reversal")
    Delta = Delta or 2 * config.m_bound
    k = config.constants
    refless, referenced = _tr_sources(oracle, H_hat, eta, Delta, config, rng, round0)
    # in units of r', every new term with |lambda| > eta/2 has |r'| > 1/2
    S = identify_structure(refless, 0.5, zeta / 2, oracle, rng, config.m_bound, k.c_cc, max_attempts=k.max_attempts)
    terms = set(S.terms) | (set(H_hat.paulis) if H_hat is not None else set())
    est = estimate_parameters(terms, referenced, 0.5, zeta / 2, oracle, rng, k.c_sh, k.boost)
    return S, est


def bootstrap_schedule(eps: float, delta: float):
    T = math.floor(math.log2(1 / eps))
    etas = [2.0**-j for j in range(T + 1)]
    zetas = [delta / 2 ** (T + 1 - j) for j in range(T + 1)]
    return T, etas, zetas


def bootstrap_learn(oracle: QueryOracle, config: LearnerConfig, rng: np.random.Generator | None = None
                    ) -> ParameterEstimate:
    """Heisenberg-limited learning by amplified residual rounds eta_j = 2^-j."""
    if oracle.mode != TIME_REVERSAL:
        raise AccessModeViolation("bootstrap learning needs time reversal")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n = oracle.n
    Delta = 2 * config.m_bound
    T, etas, zetas = bootstrap_schedule(config.epsilon, config.delta)
    lam: dict = {}
    found: set = set()
    history = []
    copies = 0
    for j, (eta, zeta) in enumerate(zip(etas, zetas)):
        H_hat = SparseHamiltonian(n, tuple((p, float(np.clip(v, -1, 1))) for p, v in lam.items()))
        S, est = learn_residual(oracle, H_hat, eta, zeta, config, rng, Delta, round0=(j == 0))
        found |= set(S.terms)
        for p, r in est.entries.items():
            lam[p] = lam.get(p, 0.0) + eta * r
        lam = _prune(lam, config.m_bound)
        copies += est.copies
        history.append({"round": j, "eta": eta, "zeta": zeta, "new_terms": sorted(str(p) for p in S.terms),
                        "attempts": S.attempts, "copies": est.copies, "threshold_guaranteed": S.guaranteed})
    return ParameterEstimate(lam, config.epsilon, config.delta, copies, frozenset(lam), tuple(history))


# ------------------------------------------------------------------ time-forward pipeline


def galactic_params(p: float, H_norm: float, eps: float):
    """(Delta, K, Lambda_bound) trading a 2^p larger Delta for a shorter log series."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if H_norm <= 0 or not 0 < eps:
        raise ValueError("need H_norm > 0 and eps > 0")
    Delta = 2**p * H_norm
    C = 1 / (2 * (1 - 2.0**-p))
    gamma = eps / (2 * Delta)
    K = max(1, math.ceil(math.log2(C / gamma) / p) - 1)
    return Delta, K, (Delta / eps) ** (1 / p)


def timeforward_params(config: LearnerConfig):
    """(Delta, K) for the time-forward or galactic pipeline."""
    norm = config.norm_known if config.norm_known is not None else config.m_bound
    if config.mode == GALACTIC:
        Delta, K, _ = galactic_params(config.p, norm, config.epsilon)
        return Delta, K
    Delta = 2 * norm
    return Delta, be.log_order(Delta, config.epsilon)


def _tf_sources(oracle: QueryOracle, Delta: float, K: int, cfg: LearnerConfig):
    if cfg.controlization == EXACT_CONTROL:
        B = be.matrix_log_encoding(oracle, Delta, K, charge=False)
        return source_from_encoding(B, referenced=False), source_from_encoding(B, refless=False)
    _, Lam = be.matrix_log_coefficients(K)
    base = tuple((j / Delta, 1) for j in range(1, K + 1))
    n = oracle.n
    b = max(1, math.ceil(math.log2(K + 1)))
    out = []
    for stage, ref in ((STRUCT_TF, False), (PARAM_TF, True)):
        segs = [_segments(stage, t, Delta, cfg.epsilon, cfg) for t, _ in base]
        rho = controlized_matrix_log_density(oracle, Delta, K, segs, ref)
        args = (None, rho) if ref else (rho, None)
        out.append(source_from_density(*args, Lam * Delta, _controlized_profile(base, segs), b + n, n,
                                       queries=K, gamma_ctrl=_gamma_ctrl(base, segs, Delta)))
    return out[0], out[1]


def timeforward_learn(oracle: QueryOracle, config: LearnerConfig, rng: np.random.Generator | None = None
                      ) -> ParameterEstimate:
    """Learning from positive-time queries only, via the matrix-log encoding."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    Delta, K = timeforward_params(config)
    k = config.constants
    eps = config.epsilon
    refless, referenced = _tf_sources(oracle, Delta, K, config)
    S = identify_structure(refless, eps / 2, config.delta / 2, oracle, rng, config.m_bound, k.c_cc,
                           max_attempts=k.max_attempts)
    est = estimate_parameters(S.terms, referenced, eps, config.delta / 2, oracle, rng, k.c_sh, k.boost)
    entries = _prune(est.entries, config.m_bound)
    if oracle.ledger.negative_queries and oracle.mode == TIME_FORWARD:
        raise AccessModeViolation("negative-time query recorded in time-forward mode")
    hist = ({"Delta": Delta, "K": K, "attempts": S.attempts, "copies": est.copies,
             "threshold_guaranteed": S.guaranteed},)
    return ParameterEstimate(entries, eps, config.delta, est.copies, frozenset(S.terms), hist)


def learn(oracle: QueryOracle, config: LearnerConfig, rng: np.random.Generator | None = None) -> ParameterEstimate:
    if config.mode == TIME_REVERSAL:
        return bootstrap_learn(oracle, config, rng)
    return timeforward_learn(oracle, config, rng)
