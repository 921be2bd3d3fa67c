"""Lemma-level numerical checks shared by the CLI and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import blockenc as be
from . import channels as ch
from . import learner as ln
from .core import QueryOracle, hamiltonian_dense, random_instance
from .measure import ShadowCollector, decoding_operators, pchoi_vector


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def _poly_mul(a: list, b: list) -> list:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def log_series_polynomial(K: int) -> list[Fraction]:
    """Coefficients in x of sum_{k<=K} (-1)^{k+1} (x - 1)^k / k, exactly."""
    total = [Fraction(0)] * (K + 1)
    power = [Fraction(1)]
    for k in range(1, K + 1):
        power = _poly_mul(power, [Fraction(-1), Fraction(1)])
        for i, c in enumerate(power):
            total[i] += Fraction((-1) ** (k + 1), k) * c
    return total


def lambda_bounds(K: int) -> tuple[float, float]:
    return math.log(K + 1) + (2**K - 1) / K, math.log(K) + 2**K


def check_matrix_log_coefficients(K_max: int = 20) -> Check:
    table = []
    ok = True
    for K in range(1, K_max + 1):
        c = be.matrix_log_coefficients_exact(K)
        same = list(c) == log_series_polynomial(K)
        Lam = float(sum(abs(x) for x in c))
        lo, hi = lambda_bounds(K)
        inside = lo - 1e-12 <= Lam <= hi + 1e-12
        ok &= same and inside
        table.append({"K": K, "Lambda": Lam, "lower": lo, "upper": hi, "identity": same})
    return Check("matrix_log_coefficients", ok, {"table": table})


def check_hockey_stick(K_max: int = 20) -> Check:
    ok = all(sum(math.comb(k - 1, j - 1) for k in range(j, K + 1)) == math.comb(K, j)
             for K in range(1, K_max + 1) for j in range(1, K + 1))
    return Check("hockey_stick", ok)


def check_truncation(rng: np.random.Generator, count: int = 200, Ks=(2, 4, 6)) -> Check:
    worst = {K: 0.0 for K in Ks}
    ok = True
    for _ in range(count):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, min(6, 4**n - 1) + 1))
        H = hamiltonian_dense(random_instance(n, m, rng))
        w, V = np.linalg.eigh(H)
        Delta = 2 * np.max(np.abs(w))
        U = (V * np.exp(-1j * w / Delta)) @ V.conj().T
        for K in Ks:
            err = np.linalg.norm(H / Delta - 1j * be.log_series(U, K), 2)
            worst[K] = max(worst[K], float(err))
            ok &= err <= be.truncation_error_bound(0.5, K) + 1e-12 and err <= 2.0 ** -(K + 1)
    return Check("matrix_log_truncation", ok, {"worst": {str(k): v for k, v in worst.items()}})


def check_controlization(rng: np.random.Generator, count: int = 50) -> Check:
    rows = []
    ok = True
    for _ in range(count):
        n = int(rng.integers(1, 3))
        H = hamiltonian_dense(random_instance(n, int(rng.integers(1, 4)), rng))
        norm = float(np.linalg.norm(H, 2))
        t = float(rng.uniform(0.05, 1.0)) / norm
        N = int(rng.integers(1, 200))
        spec = ch.ControlSpec(str(int(rng.integers(0, 2))))
        dist = ch.controlization_error(H, t, N, spec)
        bound = t * t * norm * norm / N
        ok &= dist <= bound + 1e-12
        rows.append({"n": n, "t": t, "N": N, "distance": dist, "bound": bound})
    return Check("controlization_choi", ok, {"runs": len(rows), "max_ratio": max(r["distance"] / r["bound"] for r in rows)})


def check_shadow_variance(rng: np.random.Generator, states: int = 4, samples: int = 4000) -> Check:
    worst = 0.0
    for _ in range(states):
        n = int(rng.integers(1, 3))
        H = random_instance(n, int(rng.integers(1, 4)), rng)
        A = hamiltonian_dense(H) / (2 * max(1, H.m))
        vec = pchoi_vector(A, True)
        ops = decoding_operators(n, H.paulis)
        vals = ShadowCollector(ops, vec).values(samples, rng)
        worst = max(worst, float(np.max(np.var(vals, axis=0))))
    return Check("shadow_variance", worst <= 6.0, {"max_variance": worst})


def check_coupon_collector(rng: np.random.Generator, runs: int = 2000) -> Check:
    probs = np.array([0.5, 0.5])
    draws = []
    for _ in range(runs):
        seen, k = set(), 0
        while len(seen) < 2:
            seen.add(int(rng.choice(2, p=probs)))
            k += 1
        draws.append(k)
    mean = float(np.mean(draws))
    bound = math.log(2 / 0.1) * 1.0 / 0.5
    return Check("coupon_collector", abs(mean - 3) < 0.15, {"mean_copies": mean, "bound_delta_0.1": bound})


def check_bernoulli(rng: np.random.Generator, reps: int = 10_000, cases=((10, 0.5, 1.0), (10, 0.2, 1.0))) -> Check:
    rows = []
    ok = True
    for N, p, c in cases:
        Q = ln.copies_to_queries(N, p, c)
        fails = float(np.mean(rng.binomial(Q, p, size=reps) < N))
        ok &= fails <= math.exp(-c * N)
        rows.append({"N": N, "p": p, "c": c, "Q": Q, "failure_rate": fails, "bound": math.exp(-c * N)})
    return Check("copies_to_queries", ok, {"cases": rows})


def check_galactic(eps: float = 0.1, H_norm: float = 1.0) -> Check:
    rows = []
    ok = True
    for p in range(1, 65):
        Delta, K, Lb = ln.galactic_params(p, H_norm, eps)
        ok &= K >= 1
        rows.append({"p": p, "Delta": Delta, "K": K, "Lambda_bound": Lb})
    _, K1, _ = ln.galactic_params(1, H_norm, eps)
    ok &= abs(K1 - be.log_order(2 * H_norm, eps)) <= 1
    return Check("galactic_params", ok, {"table": rows[:8] + rows[-1:]})


def check_arcsin_degree() -> Check:
    rows = [{"eps": e, "degree": be.arcsin_degree(e)} for e in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)]
    # degree grows at most linearly in log(1/eps)
    slope = np.polyfit([math.log(1 / r["eps"]) for r in rows], [r["degree"] for r in rows], 1)[0]
    return Check("arcsin_degree", bool(slope < 4), {"table": rows, "slope": float(slope)})


def check_encodings(rng: np.random.Generator) -> Check:
    H = random_instance(2, 3, rng)
    o = QueryOracle(H)
    Delta = 2 * H.m
    errs = []
    for B in (be.arcsin_encoding(o, Delta, 1e-3, charge=False), be.matrix_log_encoding(o, Delta, 4, charge=False),
              be.fourier_arcsin_encoding(o, Delta, 1e-3, charge=False)):
        errs.append((B.target_label, be.verify_encoding(B, B.reference), B.eps_claimed))
    ok = all(e <= c + 1e-9 for _, e, c in errs)
    return Check("block_encodings", ok, {"errors": [{"label": l, "error": e, "claimed": c} for l, e, c in errs]})


def run_all(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return [
        check_matrix_log_coefficients(),
        check_hockey_stick(),
        check_truncation(rng),
        check_controlization(rng),
        check_shadow_variance(rng),
        check_coupon_collector(rng),
        check_bernoulli(rng),
        check_galactic(),
        check_arcsin_degree(),
        check_encodings(rng),
    ]
