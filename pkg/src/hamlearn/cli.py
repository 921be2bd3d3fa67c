"""Command-line runner: single experiments, bound checks, scaling sweeps, instance generation."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import jsonschema
from scipy import stats

from . import checks
from .core import TIME_FORWARD, TIME_REVERSAL, PauliString, QueryOracle, SparseHamiltonian, random_instance
from .learner import (
    EXACT_CONTROL,
    GALACTIC,
    Constants,
    LearnerConfig,
    _tf_sources,
    _tr_sources,
    estimate_parameters,
    identify_structure,
    learn,
    timeforward_params,
)

SCHEMA_VERSION = "1.0"
PIPELINES = ("learn", "identify-only", "estimate-only")
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose, fixed by (seed, name)."""
    return np.random.default_rng([int(seed) & (2**64 - 1), zlib.crc32(name.encode())])


# ------------------------------------------------------------------ config


def _field(section: dict, sec: str, key: str, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{sec}].{key}: required field is missing")
        return default
    val = section[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"[{sec}].{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def load_config(text: str, seed_override: int | None = None) -> dict:
    """Parse and validate the TOML config; returns a normalized dict."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML syntax error: {e}") from None
    known = {"instance", "mode", "constants", "budget"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    inst, mode, const, budget = (raw.get(k, {}) for k in ("instance", "mode", "constants", "budget"))
    allowed = {"instance": {"n", "m", "gap", "terms"},
               "mode": {"pipeline", "access", "p", "controlization", "gamma_ctrl", "norm_known"},
               "budget": {"epsilon", "delta", "m_bound", "seed", "sweep_epsilons", "sweep_repeats"}}
    for sec, keys in allowed.items():
        if not isinstance(raw.get(sec, {}), dict):
            raise ConfigError(f"[{sec}]: must be a table")
        bad = set(raw.get(sec, {})) - keys
        if bad:
            raise ConfigError(f"[{sec}]: unknown field(s) {', '.join(sorted(bad))}")

    cfg: dict = {"instance": {}, "mode": {}, "constants": {}, "budget": {}}
    n = _field(inst, "instance", "n", int, required=True)
    if not 1 <= n <= 6:
        raise ConfigError("[instance].n: must lie in 1..6")
    cfg["instance"]["n"] = n
    terms = _field(inst, "instance", "terms", dict)
    if terms is not None:
        try:
            H = SparseHamiltonian.from_dict(n, {PauliString(k): float(v) for k, v in terms.items()})
        except (ValueError, TypeError) as e:
            raise ConfigError(f"[instance].terms: {e}") from None
        cfg["instance"]["terms"] = {str(p): c for p, c in H.terms}
    else:
        m = _field(inst, "instance", "m", int, required=True)
        if not 1 <= m <= 4**n - 1:
            raise ConfigError(f"[instance].m: must lie in 1..{4**n - 1}")
        cfg["instance"]["m"] = m
        gap = _field(inst, "instance", "gap", float, 0.2)
        if not 0 <= gap <= 1:
            raise ConfigError("[instance].gap: must lie in [0, 1]")
        cfg["instance"]["gap"] = gap

    pipeline = _field(mode, "mode", "pipeline", str, "learn")
    if pipeline not in PIPELINES:
        raise ConfigError(f"[mode].pipeline: must be one of {', '.join(PIPELINES)}")
    access = _field(mode, "mode", "access", str, TIME_REVERSAL)
    if access not in (TIME_REVERSAL, TIME_FORWARD, GALACTIC):
        raise ConfigError(f"[mode].access: must be {TIME_REVERSAL}, {TIME_FORWARD} or {GALACTIC}")
    p = _field(mode, "mode", "p", float, 1.0)
    if access == GALACTIC and p < 1:
        raise ConfigError(f"[mode].p: galactic mode needs p >= 1, got {p}")
    ctrl = _field(mode, "mode", "controlization", str, EXACT_CONTROL)
    if ctrl not in (EXACT_CONTROL, "qdrift"):
        raise ConfigError("[mode].controlization: must be exact-control or qdrift")
    gamma = mode.get("gamma_ctrl", "auto")
    if gamma != "auto":
        if not isinstance(gamma, (int, float)) or isinstance(gamma, bool) or gamma <= 0:
            raise ConfigError("[mode].gamma_ctrl: must be 'auto' or a positive number")
        gamma = float(gamma)
    norm = mode.get("norm_known", None)
    if norm is not None and (not isinstance(norm, (int, float)) or isinstance(norm, bool) or norm <= 0):
        raise ConfigError("[mode].norm_known: must be a positive number")
    cfg["mode"] = {"pipeline": pipeline, "access": access, "p": p, "controlization": ctrl,
                   "gamma_ctrl": gamma, "norm_known": None if norm is None else float(norm)}

    defaults = Constants()
    names = {f.name: f.type for f in fields(Constants)}
    unknown = set(const) - set(names)
    if unknown:
        raise ConfigError(f"[constants]: unknown constant(s) {', '.join(sorted(unknown))}")
    for name in names:
        dflt = getattr(defaults, name)
        val = _field(const, "constants", name, type(dflt), dflt)
        if val <= 0:
            raise ConfigError(f"[constants].{name}: must be positive")
        cfg["constants"][name] = val

    eps = _field(budget, "budget", "epsilon", float, 0.1)
    delta = _field(budget, "budget", "delta", float, 0.1)
    for key, v in (("epsilon", eps), ("delta", delta)):
        if not 0 < v < 1:
            raise ConfigError(f"[budget].{key}: must lie in (0, 1)")
    m_bound = _field(budget, "budget", "m_bound", int, cfg["instance"].get("m") or len(cfg["instance"].get("terms", {})) or 1)
    if m_bound < 1:
        raise ConfigError("[budget].m_bound: must be positive")
    seed = _field(budget, "budget", "seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    sweep = _field(budget, "budget", "sweep_epsilons", list, None)
    reps = _field(budget, "budget", "sweep_repeats", int, 1)
    cfg["budget"] = {"epsilon": eps, "delta": delta, "m_bound": m_bound, "seed": seed,
                     "sweep_epsilons": sweep, "sweep_repeats": reps}
    return cfg


def learner_config(cfg: dict, epsilon: float | None = None, seed: int | None = None) -> LearnerConfig:
    m, b = cfg["mode"], cfg["budget"]
    return LearnerConfig(
        epsilon=epsilon or b["epsilon"], delta=b["delta"], m_bound=b["m_bound"], mode=m["access"], p=m["p"],
        controlization=m["controlization"], gamma_ctrl=None if m["gamma_ctrl"] == "auto" else m["gamma_ctrl"],
        norm_known=m["norm_known"], constants=Constants(**cfg["constants"]),
        seed=b["seed"] if seed is None else seed)


def make_instance(cfg: dict, seed: int) -> SparseHamiltonian:
    inst = cfg["instance"]
    if "terms" in inst:
        return SparseHamiltonian.from_dict(inst["n"], {PauliString(k): v for k, v in inst["terms"].items()})
    return random_instance(inst["n"], inst["m"], substream(seed, "instance"), inst["gap"])


# ------------------------------------------------------------------ pipelines


def execute(cfg: dict, epsilon: float | None = None, seed: int | None = None) -> dict:
    """Run the configured pipeline and return the report body."""
    lc = learner_config(cfg, epsilon, seed)
    H = make_instance(cfg, lc.seed)
    access = TIME_FORWARD if lc.mode in (TIME_FORWARD, GALACTIC) else TIME_REVERSAL
    oracle = QueryOracle(H, access)
    rng = substream(lc.seed, "learner")
    pipeline = cfg["mode"]["pipeline"]
    structure, params = None, None
    if pipeline == "learn":
        est = learn(oracle, lc, rng)
        params = est.entries
        structure = est.structure
    else:
        if access == TIME_REVERSAL:
            Delta = 2 * lc.m_bound
            refless, referenced = _tr_sources(oracle, None, 1.0, Delta, lc, rng, True)
        else:
            Delta, K = timeforward_params(lc)
            refless, referenced = _tf_sources(oracle, Delta, K, lc)
        gamma = lc.epsilon / 2
        if pipeline == "identify-only":
            structure = identify_structure(refless, gamma, lc.delta, oracle, rng, lc.m_bound,
                                           lc.constants.c_cc).terms
        else:
            terms = H.paulis
            est = estimate_parameters(terms, referenced, lc.epsilon, lc.delta, oracle, rng,
                                      lc.constants.c_sh, lc.constants.boost)
            params, structure = est.entries, est.structure
    ledger = oracle.ledger.snapshot()
    true = {str(p): c for p, c in H.terms}
    outputs = {"structure": sorted(str(p) for p in structure or ()),
               "parameters": None if params is None else {str(p): float(v) for p, v in sorted(params.items())}}
    report_checks = []
    if params is not None:
        keys = set(true) | set(outputs["parameters"])
        err = max(abs(true.get(k, 0.0) - outputs["parameters"].get(k, 0.0)) for k in keys)
        outputs["max_error"] = err
        report_checks.append({"name": "error_within_epsilon", "passed": err <= lc.epsilon, "detail": {"max_error": err}})
    support = {k for k, v in true.items() if abs(v) > lc.epsilon}
    report_checks.append({"name": "structure_superset", "passed": support <= set(outputs["structure"]),
                          "detail": {"missing": sorted(support - set(outputs["structure"]))}})
    if access == TIME_FORWARD:
        report_checks.append({"name": "no_negative_time", "passed": ledger["negative_queries"] == 0, "detail": {}})
    if ledger["t_min_observed"] is not None:
        report_checks.append({"name": "t_total_at_least_t_min",
                              "passed": ledger["t_total"] >= ledger["t_min_observed"], "detail": {}})
    return {"instance": {"n": H.n, "terms": true}, "outputs": outputs, "ledger": ledger, "checks": report_checks}


def _report(command: str, cfg: dict | None, body: dict, seed: int, wall: float | None) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "seed": seed, "config": cfg,
            "wall_clock": wall, **body}


def load_schema() -> dict:
    return json.loads(resources.files("hamlearn").joinpath("schema/report.schema.json").read_text())


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema())


def _emit(report: dict, out: str | None, fmt: str) -> None:
    validate_report(report)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "key", "value"])
        for k, v in (report.get("ledger") or {}).items():
            w.writerow(["ledger", k, v])
        for k in (report.get("outputs") or {}).get("structure", []):
            w.writerow(["structure", k, 1])
        for k, v in ((report.get("outputs") or {}).get("parameters") or {}).items():
            w.writerow(["parameter", k, v])
        for row in report.get("sweep", {}).get("points", []):
            w.writerow(["sweep", row["epsilon"], row["t_total"]])
        for c in report.get("checks", []):
            w.writerow(["check", c["name"], c["passed"]])
        text = buf.getvalue()
    else:
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_config(path: str, seed: int | None) -> dict:
    try:
        with open(path) as fh:
            return load_config(fh.read(), seed)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None


# ------------------------------------------------------------------ subcommands


def cmd_run(args) -> int:
    cfg = _read_config(args.config, args.seed)
    t0 = time.perf_counter()
    body = execute(cfg)
    wall = time.perf_counter() - t0 if args.timing else None
    report = _report("run", cfg, body, cfg["budget"]["seed"], wall)
    _emit(report, args.out, args.format)
    return EXIT_OK if all(c["passed"] for c in body["checks"]) else EXIT_CHECK_FAILED


def cmd_verify(args) -> int:
    seed = 0 if args.seed is None else args.seed
    t0 = time.perf_counter()
    results = [c.as_dict() for c in checks.run_all(seed)]
    wall = time.perf_counter() - t0 if args.timing else None
    _emit(_report("verify-bounds", None, {"checks": results}, seed, wall), args.out, args.format)
    return EXIT_OK if all(c["passed"] for c in results) else EXIT_CHECK_FAILED


def _sweep_point(cfg: dict, eps: float, seed: int) -> float:
    return execute(cfg, epsilon=eps, seed=seed)["ledger"]["t_total"]


def fit_slope(epsilons, t_totals) -> dict:
    """Least-squares slope of log t_total against log(1/eps) with a 95% interval."""
    x = np.log(1 / np.asarray(epsilons, float))
    y = np.log(np.asarray(t_totals, float))
    fit = stats.linregress(x, y)
    dof = len(x) - 2
    half = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else float("inf")
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "ci95": [float(fit.slope - half), float(fit.slope + half)]}


def sweep(cfg: dict, epsilons, repeats: int = 1, workers: int = 1) -> dict:
    if len(epsilons) < 3:
        raise ConfigError("a sweep needs at least 3 epsilon values")
    seed = cfg["budget"]["seed"]
    jobs = [(cfg, float(e), seed + r) for e in epsilons for r in range(repeats)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            totals = list(pool.map(_sweep_point, *zip(*jobs)))
    else:
        totals = [_sweep_point(*j) for j in jobs]
    points = []
    for i, e in enumerate(epsilons):
        chunk = totals[i * repeats:(i + 1) * repeats]
        points.append({"epsilon": float(e), "t_total": float(math.exp(np.mean(np.log(chunk))))})
    fit = fit_slope([p["epsilon"] for p in points], [p["t_total"] for p in points])
    return {"points": points, **fit}


def cmd_sweep(args) -> int:
    cfg = _read_config(args.config, args.seed)
    eps = args.eps if args.eps else cfg["budget"]["sweep_epsilons"]
    if not eps:
        raise ConfigError("no epsilon list: pass --eps or set [budget].sweep_epsilons")
    t0 = time.perf_counter()
    result = sweep(cfg, [float(e) for e in eps], cfg["budget"]["sweep_repeats"], args.workers)
    wall = time.perf_counter() - t0 if args.timing else None
    _emit(_report("sweep", cfg, {"sweep": result, "checks": []}, cfg["budget"]["seed"], wall), args.out, args.format)
    return EXIT_OK


def cmd_gen(args) -> int:
    seed = 0 if args.seed is None else args.seed
    try:
        H = random_instance(args.n, args.m, substream(seed, "instance"), args.gap)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    lines = ["[instance]", f"n = {H.n}", "", "[instance.terms]"]
    lines += [f'{p} = {c!r}' for p, c in H.terms]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hamlearn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, default=None, metavar="U64")
        p.add_argument("--out", default=None, metavar="PATH")
        p.add_argument("--workers", type=int, default=1, metavar="N")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--timing", action="store_true", help="record wall-clock time in the report")

    common(sub.add_parser("run", help="run one learning experiment"))
    common(sub.add_parser("verify-bounds", help="run the lemma-level checks"), config=False)
    sw = sub.add_parser("sweep", help="fit t_total against 1/epsilon")
    common(sw)
    sw.add_argument("--eps", type=float, nargs="+", default=None)
    g = sub.add_parser("gen-instance", help="print a random instance as a config fragment")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--gap", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "verify-bounds": cmd_verify, "sweep": cmd_sweep, "gen-instance": cmd_gen}[args.command]
    try:
        return handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
