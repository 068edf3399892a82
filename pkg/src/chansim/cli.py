"""Command-line front end for the toolkit.

Every number the CLI prints or writes is produced by a module operation;
this file only parses configuration, dispatches, and formats. Runs are
deterministic: the master seed fixes all randomness, CSV files carry no
timestamps, and rerunning with the same resolved configuration yields
byte-identical output files. Timings go to stderr only.

Exit codes: 0 success, 2 invalid input, 3 cap exceeded, 4 infeasible,
5 retries exhausted. Bound rows that fail (FAIL in the table) are
findings, not errors; they do not change the exit code.
"""

import argparse
import contextlib
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import applications, fidelity, simulate, typeclasses, zero_error
from ._seeds import child_seed
from .applications import (DistortionSpec, build_dilution, expected_distortion,
                           rd_grid_oracle, rd_sweep, realize_from_uniform,
                           uniform_index_stream)
from .core_prob import (Channel, Distribution, conditional_entropy, entropy,
                        mutual_information, output_marginal, tv_distance)
from .covering import build_covering, verify_covering
from .errors import (CapExceededError, InfeasibleError, InvalidInputError,
                     RetriesExhaustedError)
from .fidelity import derandomize, derandomized_family, measure_fidelity
from .simulate import (accounting, build_sim_code, jointly_typical_types,
                       strong_fidelity_report)
from .typeclasses import TypicalSpec, typical_probability_bounds, typical_types
from .zero_error import ZeroErrorInstance, alternate, brute_force_oracle, gamma_bracket

CSV_VERSION = "v1"

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_CAP_EXCEEDED = 3
EXIT_INFEASIBLE = 4
EXIT_RETRIES_EXHAUSTED = 5

# Enumeration caps reachable through --cap-override KEY=VALUE. Overrides are
# applied for the duration of one run and restored afterwards.
CAP_REGISTRY = {
    "JOINT_ENUM_N_CAP": typeclasses,
    "JOINT_ENUM_CELLS_CAP": typeclasses,
    "WORD_ENUM_CAP": typeclasses,
    "EXACT_PROB_N_CAP": typeclasses,
    "OUTPUT_ENUM_CAP": simulate,
    "BLOCK_ENUM_CAP": simulate,
    "FIDELITY_ENUM_CAP": fidelity,
    "EXACT_VERIFY_N_CAP": fidelity,
    "EXACT_COMBO_CAP": zero_error,
    "ORACLE_XY_CAP": zero_error,
    "ORACLE_C_CAP": zero_error,
    "GRID_ORACLE_CAP": applications,
}

_INSTANCE_KEYS = {"source", "channel", "target", "distortion", "c_max"}
_COMMON_KEYS = {"command", "config", "instance", "seed", "out", "workers",
                "mode", "cap_override"}
_CONFIG_KEYS = {"instance", "seed", "out", "workers", "mode", "caps", "params"}


@dataclass(frozen=True)
class BoundRow:
    """One inequality the run was checked against. slack >= 0 means it
    holds; reference says in plain words where the bound comes from."""
    name: str
    reference: str
    lhs: float
    rhs: float
    slack: float
    passed: bool


@dataclass
class ExperimentConfig:
    command: str
    instance: dict
    params: dict
    seed: int = 0
    out: str = None
    workers: int = 1
    mode: str = "exact"
    caps: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Canonical document the hash is taken over: instance content
        inlined, every registry cap listed with its effective value.
        Output directory and worker count are excluded because they do
        not change any computed number."""
        caps = {name: int(self.caps.get(name, getattr(mod, name)))
                for name, mod in CAP_REGISTRY.items()}
        return {"command": self.command, "instance": self.instance,
                "params": self.params, "seed": self.seed, "mode": self.mode,
                "caps": caps}

    def config_hash(self) -> str:
        canon = json.dumps(self.resolved(), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    command: str
    timings: dict                 # phase -> seconds; stderr only, never in files
    outputs: dict                 # scalar results in print order
    comparisons: list             # BoundRow entries
    table_columns: list = field(default_factory=list)
    table_rows: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)   # filename -> json document


def compare_bounds(record: RunRecord):
    """The run's bound checks as (name, reference, lhs, rhs, slack, passed)
    rows. A run that produced no comparisons is a reporting bug, not an
    empty table."""
    if not record.comparisons:
        raise InvalidInputError("run produced no bound comparisons")
    return [(c.name, c.reference, c.lhs, c.rhs, c.slack, c.passed)
            for c in record.comparisons]


def _row(name, reference, lhs, rhs, tol=1e-9):
    """Inequality lhs >= rhs - tol recorded with slack = lhs - rhs."""
    lhs, rhs = float(lhs), float(rhs)
    return BoundRow(name, reference, lhs, rhs, lhs - rhs, lhs >= rhs - tol)


def _row_le(name, reference, lhs, rhs, tol=1e-9):
    """Inequality lhs <= rhs + tol recorded with slack = rhs - lhs."""
    lhs, rhs = float(lhs), float(rhs)
    return BoundRow(name, reference, lhs, rhs, rhs - lhs, lhs <= rhs + tol)


def _wrap_comparisons(comparisons, reference):
    return [BoundRow(c.name, reference, float(c.lhs), float(c.rhs),
                     float(c.slack), bool(c.passed)) for c in comparisons]


# ---------------------------------------------------------------------------
# instance documents


def _load_json_file(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {what} {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{what} {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise InvalidInputError(f"{what} {path} must hold a JSON object")
    return doc


class InstanceBundle:
    """Parsed instance document: the pieces a command may need."""

    def __init__(self, doc: dict):
        unknown = set(doc) - _INSTANCE_KEYS
        if unknown:
            raise InvalidInputError(
                f"unknown instance keys {sorted(unknown)}; "
                f"allowed: {sorted(_INSTANCE_KEYS)}")
        self.channel = None
        if "channel" in doc:
            if not isinstance(doc["channel"], dict) or "rows" not in doc["channel"]:
                raise InvalidInputError('instance "channel" must be {"rows": [[...]]}')
            self.channel = Channel.from_json_dict(doc["channel"])
        self.source = None
        if "source" in doc:
            if not isinstance(doc["source"], dict) or "probs" not in doc["source"]:
                raise InvalidInputError('instance "source" must be {"probs": [...]}')
            self.source = Distribution.from_json_dict(doc["source"])
        elif self.channel is not None:
            self.source = Distribution.uniform(self.channel.input_size)
        self.target = None
        if "target" in doc:
            if not isinstance(doc["target"], dict) or "probs" not in doc["target"]:
                raise InvalidInputError('instance "target" must be {"probs": [...]}')
            self.target = Distribution.from_json_dict(doc["target"])
        self.distortion = None
        if "distortion" in doc:
            m = np.asarray(doc["distortion"], dtype=float)
            if m.ndim != 2:
                raise InvalidInputError('instance "distortion" must be a matrix')
            self.distortion = m
        self.c_max = None
        if "c_max" in doc:
            self.c_max = int(doc["c_max"])

    def need_channel(self) -> Channel:
        if self.channel is None:
            raise InvalidInputError("this command needs a channel in the instance")
        return self.channel

    def need_source(self) -> Distribution:
        if self.source is None:
            raise InvalidInputError("this command needs a source in the instance")
        return self.source


def _need_param(cfg: ExperimentConfig, key: str):
    value = cfg.params.get(key)
    if value is None:
        raise InvalidInputError(f"missing required parameter --{key.replace('_', '-')}")
    return value


def _parse_targets(text: str):
    """Comma list "0.05,0.1" or linspace "lo:hi:count"."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError("count must be positive")
            return [float(t) for t in np.linspace(float(lo), float(hi), count)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"bad --targets {text!r}: {exc}")


# ---------------------------------------------------------------------------
# cap overrides


def parse_cap_overrides(pairs):
    caps = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise InvalidInputError(f"--cap-override needs KEY=VALUE, got {pair!r}")
        if key not in CAP_REGISTRY:
            raise InvalidInputError(
                f"unknown cap {key!r}; known: {sorted(CAP_REGISTRY)}")
        try:
            caps[key] = int(value, 0)
        except ValueError:
            raise InvalidInputError(f"cap {key} needs an integer, got {value!r}")
    return caps


@contextlib.contextmanager
def _cap_overrides(caps: dict):
    saved = {name: getattr(CAP_REGISTRY[name], name) for name in caps}
    try:
        for name, value in caps.items():
            setattr(CAP_REGISTRY[name], name, value)
        yield
    finally:
        for name, value in saved.items():
            setattr(CAP_REGISTRY[name], name, value)


# ---------------------------------------------------------------------------
# deterministic output files


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12g" % float(value)
    return str(value)


def _write_csv(path, tag, columns, rows, config_hash):
    lines = [f"# chansim {tag} csv {CSV_VERSION}",
             f"# columns: {','.join(columns)}",
             f"# config: {config_hash}",
             ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_artifacts(cfg: ExperimentConfig, record: RunRecord):
    os.makedirs(cfg.out, exist_ok=True)
    stem = cfg.command.replace("-", "_")
    if record.table_columns:
        _write_csv(os.path.join(cfg.out, f"{stem}.csv"), cfg.command,
                   record.table_columns, record.table_rows, record.config_hash)
    bound_rows = [(c.name, c.reference, c.lhs, c.rhs, c.slack, c.passed)
                  for c in record.comparisons]
    _write_csv(os.path.join(cfg.out, "bounds.csv"), f"{cfg.command}-bounds",
               ("name", "reference", "lhs", "rhs", "slack", "passed"),
               bound_rows, record.config_hash)
    for filename, doc in record.artifacts.items():
        with open(os.path.join(cfg.out, filename), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# command handlers


def _run_info(cfg, bundle):
    source = bundle.need_source()
    outputs = {"H(P)": entropy(source)}
    comparisons = [_row("source entropy >= 0", "entropy range", outputs["H(P)"], 0.0)]
    table = [("H(P)", outputs["H(P)"])]
    if bundle.channel is not None:
        ch = bundle.channel
        if source.alphabet_size != ch.input_size:
            raise InvalidInputError("source alphabet does not match channel input")
        mi = mutual_information(source, ch)
        h_cond = conditional_entropy(source, ch)
        h_out = entropy(output_marginal(source, ch))
        outputs.update({"I(P;W)": mi, "H(W|P)": h_cond, "H(PW)": h_out})
        table += [("I(P;W)", mi), ("H(W|P)", h_cond), ("H(PW)", h_out)]
        comparisons += [
            _row("mutual information >= 0", "information nonnegativity", mi, 0.0),
            BoundRow("output entropy = mutual + conditional", "entropy chain rule",
                     mi + h_cond, h_out, abs(mi + h_cond - h_out),
                     abs(mi + h_cond - h_out) <= 1e-9),
        ]
    return outputs, comparisons, ("quantity", "value"), table, {}


def _run_typical(cfg, bundle):
    source = bundle.need_source()
    n = int(_need_param(cfg, "n"))
    delta = float(cfg.params.get("delta", 1.0))
    spec = TypicalSpec(source, n, delta)
    bounds = typical_probability_bounds(spec)
    count = len(typical_types(spec))
    outputs = {"n": n, "delta": delta, "typical_type_count": count,
               "chebyshev": bounds.chebyshev, "chernoff": bounds.chernoff,
               "exact": bounds.exact}
    comparisons = [
        _row("exact typical mass >= chebyshev bound",
             "variance floor on the typical mass", bounds.exact, bounds.chebyshev),
        _row("exact typical mass >= chernoff-style bound",
             "heuristic sub-gaussian floor; can fail at small skewed instances",
             bounds.exact, bounds.chernoff),
    ]
    columns = ("n", "delta", "typical_type_count", "chebyshev", "chernoff", "exact")
    rows = [(n, delta, count, bounds.chebyshev, bounds.chernoff, bounds.exact)]
    return outputs, comparisons, columns, rows, {}


def _run_cover(cfg, bundle):
    source, channel = bundle.need_source(), bundle.need_channel()
    n = int(_need_param(cfg, "n"))
    delta = float(cfg.params.get("delta", 1.0))
    epsilon = float(cfg.params.get("epsilon", 0.1))
    types = jointly_typical_types(source, channel, n, delta)
    if not types:
        raise InvalidInputError("no jointly typical types; widen delta")
    rows, margins_i, margins_ii, retries_total = [], [], [], 0
    for idx, t in enumerate(types):
        fam = build_covering(t, epsilon, mode="guaranteed",
                             seed=child_seed(cfg.seed, f"cover:{idx}"))
        check = verify_covering(fam)
        m_i = float(check.condition_I_margin.min())
        m_ii = float(check.condition_II_margin)
        counts = ";".join("-".join(str(c) for c in row) for row in t.counts)
        rows.append((idx, counts, fam.M, fam.N, fam.retries, m_i, m_ii))
        margins_i.append(m_i)
        margins_ii.append(m_ii)
        retries_total += fam.retries
    outputs = {"type_count": len(types), "max_M": max(r[2] for r in rows),
               "max_N": max(r[3] for r in rows), "total_retries": retries_total}
    comparisons = [
        _row("min per-word hit margin >= 0",
             "every compatible word is covered with room", min(margins_i), 0.0),
        _row("min list-budget margin >= 0",
             "list sizes clear the counting threshold", min(margins_ii), 0.0),
    ]
    columns = ("type_index", "counts", "M", "N", "retries",
               "margin_condition_I", "margin_condition_II")
    return outputs, comparisons, columns, rows, {}


def _build_code(cfg, bundle, keep_words):
    source, channel = bundle.need_source(), bundle.need_channel()
    n = int(_need_param(cfg, "n"))
    delta = float(cfg.params.get("delta", 1.0))
    epsilon = float(cfg.params.get("epsilon", 0.1))
    return build_sim_code(source, channel, n, delta, epsilon, cfg.seed,
                          keep_words=keep_words)


def _run_simulate(cfg, bundle):
    rates_only = bool(cfg.params.get("rates_only", False))
    code = _build_code(cfg, bundle, keep_words=not rates_only)
    rate, cr_rate, bounds = accounting(code)
    outputs = {"n": code.n, "rate": rate, "cr_rate": cr_rate,
               "announce_bits": code.announce_bits, "N": code.N,
               "type_count": len(code.typical_joint_types)}
    comparisons = _wrap_comparisons(bounds.comparisons,
                                    "single-letter information floors")
    lam = lam_bound = global_err = None
    if not rates_only:
        try:
            report = strong_fidelity_report(code)
        except CapExceededError:
            report = None
        if report is not None:
            lam = report["lambda_measured"]
            lam_bound = report["lambda_bound"]
            global_err = report["global_err"]
            outputs.update({"lambda_measured": lam, "lambda_bound": lam_bound,
                            "global_err": global_err})
            comparisons.append(_row_le(
                "per-word output tv <= claimed ceiling",
                "covering corridor plus non-covered type mass", lam, lam_bound))
    columns = ("n", "delta", "epsilon", "seed", "rate", "cr_rate",
               "announce_bits", "N", "lambda_measured", "lambda_bound",
               "global_err")
    rows = [(code.n, code.delta, code.epsilon, cfg.seed, rate, cr_rate,
             code.announce_bits, code.N, lam, lam_bound, global_err)]
    return outputs, comparisons, columns, rows, {}


def _run_derandomize(cfg, bundle):
    epsilon = float(cfg.params.get("epsilon", 0.1))
    verify = cfg.params.get("verify", "auto")
    code = _build_code(cfg, bundle, keep_words=True)
    dcode = derandomize(code, epsilon, seed=cfg.seed,
                        max_retries=int(cfg.params.get("max_retries", 64)),
                        verify=verify)
    family, weights = derandomized_family(dcode)
    kwargs = {"mode": cfg.mode}
    if cfg.mode == "monte-carlo":
        kwargs["samples"] = int(cfg.params.get("samples", 4096))
        kwargs["seed"] = child_seed(cfg.seed, "cli:fidelity")
    report = measure_fidelity(code.source, code.channel, family, weights, **kwargs)
    outputs = {"n": code.n, "Q": dcode.Q, "index_bits": dcode.index_bits(),
               "index_bits_per_letter": dcode.index_bits() / code.n,
               "u": dcode.u, "verified": dcode.verified, "retries": dcode.retries,
               "letterwise_source_err": report.letterwise_source_err,
               "global_err": report.global_err, "local_err": report.local_err,
               "empirical_joint_err": report.empirical_joint_err}
    comparisons = [_row_le(
        "letterwise error <= 3*epsilon",
        "per-letter miss ceiling after freezing the shared index",
        report.letterwise_source_err, 3.0 * epsilon)]
    columns = ("n", "delta", "epsilon", "seed", "Q", "index_bits", "u",
               "verified", "retries", "global_err", "local_err",
               "letterwise_source_err", "empirical_joint_err")
    rows = [(code.n, code.delta, epsilon, cfg.seed, dcode.Q, dcode.index_bits(),
             dcode.u, dcode.verified, dcode.retries, report.global_err,
             report.local_err, report.letterwise_source_err,
             report.empirical_joint_err)]
    return outputs, comparisons, columns, rows, {}


def _run_zero_error(cfg, bundle):
    source, channel = bundle.need_source(), bundle.need_channel()
    instance = ZeroErrorInstance.build(source, channel, bundle.c_max)
    restarts = int(cfg.params.get("restarts", 20))
    fact = alternate(instance, seed=cfg.seed, restarts=restarts)
    lower, upper = gamma_bracket(instance, fact.objective)
    h_source = entropy(source)
    outputs = {"c_max": instance.c_max, "restarts": restarts,
               "objective": fact.objective, "mutual_information": lower,
               "source_entropy": h_source}
    comparisons = [
        _row("factorized label entropy >= mutual information",
             "decoding the label reproduces the output law", fact.objective, lower),
        _row_le("factorized label entropy <= source entropy",
                "copying the source is always feasible", fact.objective, h_source),
    ]
    oracle_obj = oracle_acc = oracle_gap = None
    resolution = cfg.params.get("oracle_resolution")
    if resolution is not None:
        oracle = brute_force_oracle(instance, int(resolution))
        oracle_obj, oracle_acc = oracle.objective, float(oracle.accuracy)
        oracle_gap = fact.objective - oracle_obj
        outputs.update({"oracle_objective": oracle_obj,
                        "oracle_accuracy": oracle_acc, "oracle_gap": oracle_gap})
        comparisons.append(_row_le(
            "alternating optimum within oracle accuracy",
            "exhaustive grid certificate", oracle_gap, oracle_acc + 1e-4))
    columns = ("c_max", "restarts", "objective", "mutual_information",
               "source_entropy", "oracle_objective", "oracle_accuracy",
               "oracle_gap")
    rows = [(instance.c_max, restarts, fact.objective, lower, h_source,
             oracle_obj, oracle_acc, oracle_gap)]
    artifacts = {"factorization.json": fact.to_json_dict()}
    return outputs, comparisons, columns, rows, artifacts


def _run_rd(cfg, bundle):
    source = bundle.need_source()
    if bundle.distortion is not None:
        d_matrix = bundle.distortion
    elif cfg.params.get("hamming") is not None:
        size = int(cfg.params["hamming"])
        d_matrix = 1.0 - np.eye(size)
    else:
        raise InvalidInputError(
            'rd needs a "distortion" matrix in the instance or --hamming SIZE')
    if d_matrix.shape[0] != source.alphabet_size:
        raise InvalidInputError("distortion rows must match the source alphabet")
    y_size = d_matrix.shape[1]
    targets = _parse_targets(str(_need_param(cfg, "targets")))
    results = rd_sweep(source, d_matrix, targets, y_size, workers=cfg.workers)
    resolution = cfg.params.get("certify_resolution")
    rows, excesses, gaps = [], [], []
    for target, (rate, w_opt) in zip(targets, results):
        spec = DistortionSpec(d_matrix, float(target))
        ed = expected_distortion(source, w_opt, spec)
        slack = float(target) - ed
        excesses.append(-slack)
        certified = None
        if resolution is not None:
            grid_rate, _ = rd_grid_oracle(source, spec, y_size, int(resolution))
            gaps.append(abs(grid_rate - rate))
            certified = abs(grid_rate - rate) <= 1e-4
        rows.append((float(target), rate, slack, certified))
    order = sorted(range(len(targets)), key=lambda i: targets[i])
    increase = max((rows[order[j + 1]][1] - rows[order[j]][1]
                    for j in range(len(order) - 1)), default=0.0)
    outputs = {"points": len(targets), "min_rate": min(r[1] for r in rows),
               "max_rate": max(r[1] for r in rows)}
    comparisons = [
        _row_le("every channel meets its distortion budget",
                "constraint satisfied by the returned minimizer",
                max(excesses), 0.0),
        _row_le("curve nonincreasing in allowed distortion",
                "larger budgets only relax the problem", increase, 0.0),
    ]
    if gaps:
        outputs["max_oracle_gap"] = max(gaps)
        comparisons.append(_row_le(
            "curve matches the grid oracle", "exhaustive grid certificate",
            max(gaps), 1e-4))
    return outputs, comparisons, ("d", "R", "slack", "certified"), rows, {}


def _run_dilute(cfg, bundle):
    target = bundle.target if bundle.target is not None else bundle.source
    if target is None:
        raise InvalidInputError('dilute needs a "target" distribution in the instance')
    epsilon = float(_need_param(cfg, "epsilon"))
    plan = build_dilution(target, epsilon)
    tv = plan.tv_error()
    bound = 2.0 * epsilon + 1.0 / plan.k
    total_bits = math.log2(plan.total_uniform_size)
    outputs = {"alphabet": target.alphabet_size, "epsilon": epsilon,
               "k": plan.k, "helper_size": plan.helper_size,
               "total_uniform_bits": total_bits, "tv_error": tv,
               "tv_bound": bound}
    comparisons = [_row_le("realized tv <= 2*epsilon + 1/k",
                           "geometric bucketing plus tail and rounding budget",
                           tv, bound)]
    samples = int(cfg.params.get("samples", 0))
    empirical_tv = None
    if samples > 0:
        stream = uniform_index_stream(plan.total_uniform_size,
                                      child_seed(cfg.seed, "dilute:stream"))
        draws = [realize_from_uniform(plan, stream) for _ in range(samples)]
        counts = np.bincount(draws, minlength=target.alphabet_size)
        empirical = Distribution.from_probs(counts / samples)
        empirical_tv = tv_distance(empirical, target)
        outputs.update({"samples": samples, "empirical_tv": empirical_tv})
        comparisons.append(_row_le(
            "empirical tv within the sampling window",
            "realized error plus a three-sigma multinomial allowance",
            empirical_tv, tv + 1.5 / math.sqrt(samples)))
    columns = ("alphabet", "epsilon", "k", "helper_size", "total_uniform_bits",
               "tv_error", "tv_bound", "samples", "empirical_tv")
    rows = [(target.alphabet_size, epsilon, plan.k, plan.helper_size,
             total_bits, tv, bound, samples or None, empirical_tv)]
    return outputs, comparisons, columns, rows, {"plan.json": plan.to_json_dict()}


def _run_sweep(cfg, bundle):
    source, channel = bundle.need_source(), bundle.need_channel()
    n_min = int(_need_param(cfg, "n_min"))
    n_max = int(_need_param(cfg, "n_max"))
    if n_min < 1 or n_max < n_min:
        raise InvalidInputError("need 1 <= n_min <= n_max")
    delta = float(cfg.params.get("delta", 1.0))
    epsilon = float(cfg.params.get("epsilon", 0.1))
    keep_limit = int(cfg.params.get("keep_words_up_to", 6))
    rows, rates = [], []
    for n in range(n_min, n_max + 1):
        keep = n <= keep_limit
        code = build_sim_code(source, channel, n, delta, epsilon, cfg.seed,
                              keep_words=keep)
        rate, cr_rate, _ = accounting(code)
        lam = None
        if keep:
            try:
                lam = strong_fidelity_report(code)["lambda_measured"]
            except CapExceededError:
                lam = None
        rows.append((n, rate, cr_rate, lam))
        rates.append(rate)
    mi = mutual_information(source, channel)
    increase = max((rates[i + 1] - rates[i] for i in range(len(rates) - 1)),
                   default=0.0)
    outputs = {"n_min": n_min, "n_max": n_max, "first_rate": rates[0],
               "last_rate": rates[-1]}
    comparisons = [
        _row("minimum sweep rate >= mutual information",
             "single-letter rate floor", min(rates), mi),
        _row_le("rate nonincreasing across the sweep",
                "longer blocks amortize the announcement", increase, 0.0),
    ]
    return (outputs, comparisons, ("n", "rate", "cr_rate", "strong_fidelity"),
            rows, {})


_HANDLERS = {
    "info": _run_info,
    "typical": _run_typical,
    "cover": _run_cover,
    "simulate": _run_simulate,
    "derandomize": _run_derandomize,
    "zero-error": _run_zero_error,
    "rd": _run_rd,
    "dilute": _run_dilute,
    "sweep": _run_sweep,
}


def run(cfg: ExperimentConfig) -> RunRecord:
    """Execute one configured command and collect its record. Cap overrides
    apply only for the duration of the run."""
    bundle = InstanceBundle(cfg.instance)
    t0 = time.perf_counter()
    with _cap_overrides(cfg.caps):
        outputs, comparisons, columns, rows, artifacts = \
            _HANDLERS[cfg.command](cfg, bundle)
    record = RunRecord(config_hash=cfg.config_hash(), command=cfg.command,
                       timings={"run": time.perf_counter() - t0},
                       outputs=outputs, comparisons=comparisons,
                       table_columns=list(columns), table_rows=list(rows),
                       artifacts=artifacts)
    if cfg.out:
        t1 = time.perf_counter()
        _write_artifacts(cfg, record)
        record.timings["write"] = time.perf_counter() - t1
    return record


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("instance", nargs="?", default=None,
                        help="instance JSON file")
    common.add_argument("--config", default=None, help="configuration JSON file")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--workers", type=int, default=None)
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
    mode.add_argument("--monte-carlo", dest="mode", action="store_const",
                      const="monte-carlo")
    common.add_argument("--cap-override", action="append", metavar="KEY=VALUE",
                        help="raise or lower an enumeration cap for this run")

    parser = argparse.ArgumentParser(
        prog="chansim",
        description="channel-simulation toolkit: every emitted number is "
                    "computed by a library operation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", parents=[common],
                       help="single-letter information quantities")

    p = sub.add_parser("typical", parents=[common],
                       help="typical-set mass and its lower bounds")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)

    p = sub.add_parser("cover", parents=[common],
                       help="covering families for all jointly typical types")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)

    p = sub.add_parser("simulate", parents=[common],
                       help="build the protocol code and account its rates")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--rates-only", dest="rates_only", action="store_const",
                   const=True, default=None)

    p = sub.add_parser("derandomize", parents=[common],
                       help="freeze the shared index to a sampled list")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--verify", choices=("auto", "exact", "declared"), default=None)
    p.add_argument("--max-retries", dest="max_retries", type=int, default=None)
    p.add_argument("--samples", type=int, default=None,
                   help="Monte Carlo fidelity sample count")

    p = sub.add_parser("zero-error", parents=[common],
                       help="minimal-entropy exact factorization")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--oracle-resolution", dest="oracle_resolution", type=int,
                   default=None)

    p = sub.add_parser("rd", parents=[common],
                       help="rate-distortion curve with optional certification")
    p.add_argument("--targets", default=None,
                   help='"0.05,0.1,0.25" or "lo:hi:count"')
    p.add_argument("--hamming", type=int, default=None,
                   help="use 0/1 distortion on an alphabet of this size")
    p.add_argument("--certify-resolution", dest="certify_resolution", type=int,
                   default=None)

    p = sub.add_parser("dilute", parents=[common],
                       help="replace a target law by a near-uniform stand-in")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)

    p = sub.add_parser("sweep", parents=[common],
                       help="rates across a range of block lengths")
    p.add_argument("--n-min", dest="n_min", type=int, default=None)
    p.add_argument("--n-max", dest="n_max", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--keep-words-up-to", dest="keep_words_up_to", type=int,
                   default=None)
    return parser


def build_config(argv=None) -> ExperimentConfig:
    """Parse flags, merge the optional config document (flags win), inline
    the instance content, and resolve cap overrides."""
    ns = _build_parser().parse_args(argv)
    doc = {}
    if ns.config:
        doc = _load_json_file(ns.config, "config file")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise InvalidInputError(
                f"unknown config keys {sorted(unknown)}; allowed: {sorted(_CONFIG_KEYS)}")
    params = dict(doc.get("params", {}))
    for key, value in vars(ns).items():
        if key in _COMMON_KEYS or value is None:
            continue
        params[key] = value

    instance_ref = ns.instance if ns.instance is not None else doc.get("instance")
    if instance_ref is None:
        raise InvalidInputError("no instance given (positional file or config key)")
    if isinstance(instance_ref, str):
        instance_doc = _load_json_file(instance_ref, "instance file")
    elif isinstance(instance_ref, dict):
        instance_doc = instance_ref
    else:
        raise InvalidInputError('config "instance" must be a path or an object')
    InstanceBundle(instance_doc)   # validate early so bad files exit 2 fast

    caps = dict(doc.get("caps", {}))
    for key in caps:
        if key not in CAP_REGISTRY:
            raise InvalidInputError(f"unknown cap {key!r} in config file")
    caps.update(parse_cap_overrides(ns.cap_override))
    caps = {k: int(v) for k, v in caps.items()}

    seed = ns.seed if ns.seed is not None else int(doc.get("seed", 0))
    out = ns.out if ns.out is not None else doc.get("out")
    workers = ns.workers if ns.workers is not None else int(doc.get("workers", 1))
    mode = ns.mode if ns.mode is not None else doc.get("mode", "exact")
    if mode not in ("exact", "monte-carlo"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if workers < 1:
        raise InvalidInputError("workers must be positive")
    if not 0 <= seed < 2 ** 64:
        raise InvalidInputError("seed must fit in an unsigned 64-bit integer")
    return ExperimentConfig(command=ns.command, instance=instance_doc,
                            params=params, seed=seed, out=out, workers=workers,
                            mode=mode, caps=caps)


def _print_record(record: RunRecord):
    print(f"chansim {record.command} config={record.config_hash}")
    for key, value in record.outputs.items():
        print(f"{key} = {_fmt(value)}")
    for name, reference, lhs, rhs, slack, passed in compare_bounds(record):
        verdict = "PASS" if passed else "FAIL"
        print(f"{verdict} {name}: lhs={_fmt(lhs)} rhs={_fmt(rhs)} "
              f"slack={_fmt(slack)} [{reference}]")


_ERROR_LABELS = (
    (InvalidInputError, "invalid-input", EXIT_INVALID_INPUT),
    (CapExceededError, "cap-exceeded", EXIT_CAP_EXCEEDED),
    (InfeasibleError, "infeasible", EXIT_INFEASIBLE),
    (RetriesExhaustedError, "retries-exhausted", EXIT_RETRIES_EXHAUSTED),
)


def exit_code_for(exc: Exception) -> int:
    for klass, _, code in _ERROR_LABELS:
        if isinstance(exc, klass):
            return code
    raise exc


def _report_error(exc: Exception, command: str) -> int:
    for klass, label, code in _ERROR_LABELS:
        if isinstance(exc, klass):
            reason = " ".join(str(exc).split())
            print(f"chansim: error={label} command={command} reason={reason}",
                  file=sys.stderr)
            return code
    raise exc


def main(argv=None) -> int:
    try:
        cfg = build_config(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID_INPUT
    except (InvalidInputError, CapExceededError, InfeasibleError,
            RetriesExhaustedError) as exc:
        return _report_error(exc, "(parse)")
    try:
        record = run(cfg)
    except (InvalidInputError, CapExceededError, InfeasibleError,
            RetriesExhaustedError) as exc:
        return _report_error(exc, cfg.command)
    _print_record(record)
    for phase, seconds in record.timings.items():
        print(f"# timing {phase}={seconds:.3f}s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
