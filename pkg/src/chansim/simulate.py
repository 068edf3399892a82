"""Block simulation of a noisy channel from a message plus shared randomness.

Protocol for one block x = (x_1 ... x_n), with nu a shared uniform index:
  1. the encoder samples a joint type T with the probability that the true
     channel output falls in the conditional class of T given x,
  2. if the type of x is not delta-typical for the source, or T is not
     jointly typical, the encoder announces termination and the decoder
     emits the fixed fallback word (0, ..., 0),
  3. otherwise the encoder announces T and sends the index mu of a uniformly
     chosen compatible entry of list nu of T's covering family,
  4. the decoder outputs the word stored at (nu, mu).

The covering conditions squeeze the protocol's output, conditioned on any
announced type, between (1-eps)/(1+eps) and (1+eps)/(1-eps) times the true
conditional distribution, so the per-word total variation error stays below
eps/(1-eps) plus the mass of atypical joint types.

Message cost is log2(M) plus the type announcement, counted as exactly
ceil(log2(#jointly typical types)) bits; shared randomness cost is log2(N).
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._seeds import child_seed
from .core_prob import (
    Channel,
    Distribution,
    conditional_entropy,
    entropy,
    mutual_information,
    output_marginal,
)
from .covering import (
    CoveringFamily,
    build_covering,
    compatibility_matrix,
    required_M_N,
    verify_covering,
)
from .errors import CapExceededError, InvalidInputError
from .typeclasses import (
    ExactType,
    JointType,
    TypicalSpec,
    conditional_type_class_size,
    count_occurrences,
    enumerate_joint_types,
    enumerate_type_class,
    is_conditionally_typical,
    is_typical,
    type_is_typical,
    typical_probability_bounds,
    typical_types,
)

TERMINATE = "terminate"
OUTPUT_ENUM_CAP = 1 << 20
BLOCK_ENUM_CAP = 1 << 22


@dataclass
class FamilyRecord:
    """Size and verification summary of one covering family."""

    joint_type: JointType
    M: int
    N: int
    retries: int
    condition_I_min_margin: float
    condition_II_margin: float

    def to_json_dict(self) -> dict:
        return {
            "joint_type": self.joint_type.to_json_dict(),
            "M": self.M, "N": self.N, "retries": self.retries,
            "condition_I_min_margin": self.condition_I_min_margin,
            "condition_II_margin": self.condition_II_margin,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FamilyRecord":
        return cls(JointType.from_json_dict(doc["joint_type"]), int(doc["M"]),
                   int(doc["N"]), int(doc["retries"]),
                   float(doc["condition_I_min_margin"]), float(doc["condition_II_margin"]))


@dataclass
class SimCode:
    n: int
    source: Distribution
    channel: Channel
    delta: float
    epsilon: float
    families: dict          # JointType -> CoveringFamily ({} when rates_only)
    records: dict           # JointType -> FamilyRecord (always populated)
    typical_joint_types: tuple  # canonical (lexicographic) announcement order
    N: int
    announce_bits: int
    seed: int
    rates_only: bool = False
    _tables: dict = field(default_factory=dict, repr=False)

    def fallback_word(self) -> tuple:
        return (0,) * self.n

    def family_M(self, t: JointType) -> int:
        return self.records[t].M

    def max_log2_M(self) -> float:
        return max(math.log2(r.M) for r in self.records.values()) if self.records else 0.0


@dataclass
class Transcript:
    x_word: tuple
    announced_type: object      # JointType or TERMINATE
    nu: int
    mu: object                  # int or None when terminated
    y_word: tuple
    bits_sent: float
    randomness_used: float


@dataclass
class BoundComparison:
    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool


@dataclass
class AccountingBounds:
    mutual_information: float
    conditional_entropy: float
    output_entropy: float
    announce_bits: int
    comparisons: list


def jointly_typical_types(source: Distribution, channel: Channel, n: int, delta: float):
    """Joint types whose row marginal is delta-typical for the source and
    whose conditional part sits in the channel's typicality window, in
    lexicographic order of the flattened count matrix."""
    spec = TypicalSpec(source, n, delta)
    found = []
    for base in typical_types(spec):
        for t in enumerate_joint_types(n, channel.input_size, channel.output_size,
                                       base_type=base):
            if is_conditionally_typical(t, channel, delta):
                found.append(t)
    found.sort(key=lambda t: tuple(c for row in t.counts for c in row))
    return found


def build_sim_code(source: Distribution, channel: Channel, n: int, delta: float,
                   epsilon: float, seed: int, keep_words: bool = True,
                   max_retries: int = 64) -> SimCode:
    """Construct verified covering families for every jointly typical type.

    The shared-randomness index must be uniform over one common range, so N
    is first sized per type, then fixed globally to the maximum, and every
    family's M is re-derived at that N. With keep_words=False the word arrays
    are verified and then dropped, keeping only size/margin records (rates
    and bound accounting remain available; encoding does not).
    """
    if source.alphabet_size != channel.input_size:
        raise InvalidInputError("source alphabet does not match channel input")
    jt_list = jointly_typical_types(source, channel, n, delta)
    if not jt_list:
        raise InvalidInputError("no jointly typical types; widen delta")
    n_global = max(required_M_N(t, epsilon)[1] for t in jt_list)
    families, records = {}, {}
    for idx, t in enumerate(jt_list):
        fam = build_covering(t, epsilon, mode="guaranteed", forced_N=n_global,
                             seed=child_seed(seed, f"simulate:covering:{idx}"),
                             max_retries=max_retries)
        check = verify_covering(fam)
        records[t] = FamilyRecord(t, fam.M, fam.N, fam.retries,
                                  float(check.condition_I_margin.min()),
                                  float(check.condition_II_margin))
        if keep_words:
            families[t] = fam
    announce_bits = math.ceil(math.log2(max(len(jt_list), 1)))
    return SimCode(n=n, source=source, channel=channel, delta=delta, epsilon=epsilon,
                   families=families, records=records,
                   typical_joint_types=tuple(jt_list), N=n_global,
                   announce_bits=announce_bits, seed=seed, rates_only=not keep_words)


class _TypeTables:
    """Per-type working tables for exact protocol computations."""

    def __init__(self, code: SimCode, t: JointType):
        fam = code.families[t]
        self.family = fam
        self.x_words = np.asarray(enumerate_type_class(t.row_marginal()), dtype=np.int64)
        self.x_index = {tuple(int(v) for v in w): i for i, w in enumerate(self.x_words)}
        self.y_words = fam.y_class_words()
        self.compat = compatibility_matrix(t, self.x_words, self.y_words)
        size_s = self.y_words.shape[0]
        self.mult = np.zeros((fam.N, size_s), dtype=np.int64)
        for nu in range(fam.N):
            self.mult[nu] = np.bincount(fam.words[nu], minlength=size_s)
        self.c = self.mult @ self.compat.T.astype(np.int64)  # (N, |T_R|)
        # global lexicographic indices of the y-class words in Y^n
        weights = code.channel.output_size ** np.arange(code.n - 1, -1, -1, dtype=np.int64)
        self.y_global = self.y_words @ weights


def _tables_for(code: SimCode, t: JointType) -> _TypeTables:
    if code.rates_only:
        raise InvalidInputError("code was built rates-only; rebuild with keep_words=True")
    if t not in code._tables:
        code._tables[t] = _TypeTables(code, t)
    return code._tables[t]


def _type_weights(code: SimCode, base: ExactType):
    """All joint types with the given row marginal, with the probability that
    the channel output against a base-typed input falls in each conditional
    class. Weights sum to 1 up to float rounding."""
    x_word = tuple(np.repeat(np.arange(base.alphabet_size), base.counts))
    t_list = enumerate_joint_types(code.n, code.channel.input_size,
                                   code.channel.output_size, base_type=base)
    weights = np.empty(len(t_list))
    log_rows = np.log2(code.channel.rows, where=code.channel.rows > 0,
                       out=np.full_like(code.channel.rows, -np.inf))
    for i, t in enumerate(t_list):
        log_mass = 0.0
        for x, row in enumerate(t.counts):
            for y, c in enumerate(row):
                if c == 0:
                    continue
                log_mass += c * log_rows[x, y]
        if log_mass == -np.inf:
            weights[i] = 0.0
        else:
            weights[i] = conditional_type_class_size(t, x_word) * 2.0 ** log_mass
    total = weights.sum()
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise InvalidInputError(f"type weights sum to {total}")
    return t_list, weights / total


def encode(code: SimCode, x_word, nu: int, seed):
    """One protocol run; returns (announced_type, mu) or TERMINATE."""
    if code.rates_only:
        raise InvalidInputError("code was built rates-only; rebuild with keep_words=True")
    if not 0 <= nu < code.N:
        raise InvalidInputError(f"nu {nu} outside [0, {code.N})")
    x_word = tuple(int(v) for v in x_word)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    base = count_occurrences(x_word, code.source.alphabet_size)
    t_list, weights = _type_weights(code, base)
    t = t_list[int(rng.choice(len(t_list), p=weights))]
    spec = TypicalSpec(code.source, code.n, code.delta)
    if not type_is_typical(base, spec) or t not in code.families:
        return TERMINATE
    tables = _tables_for(code, t)
    xi = tables.x_index[x_word]
    slot_ok = tables.compat[xi][code.families[t].words[nu]]
    compatible = np.flatnonzero(slot_ok)
    if compatible.size == 0:
        return TERMINATE
    mu = int(compatible[int(rng.integers(compatible.size))])
    return t, mu


def decode(code: SimCode, announced_type, nu: int, mu) -> tuple:
    """Pure table lookup; TERMINATE maps to the fallback word."""
    if announced_type == TERMINATE:
        return code.fallback_word()
    if code.rates_only:
        raise InvalidInputError("code was built rates-only; rebuild with keep_words=True")
    fam = code.families.get(announced_type)
    if fam is None:
        raise InvalidInputError("announced type has no covering family")
    if not 0 <= nu < fam.N:
        raise InvalidInputError(f"nu {nu} outside [0, {fam.N})")
    if not 0 <= mu < fam.M:
        raise InvalidInputError(f"mu {mu} outside [0, {fam.M})")
    return fam.word(nu, mu)


def run_protocol(code: SimCode, x_word, nu: int, seed) -> Transcript:
    """Encode, decode, and account one block; the encoder's reconstruction of
    the output word is the same table lookup the decoder performs."""
    outcome = encode(code, x_word, nu, seed)
    if outcome == TERMINATE:
        return Transcript(tuple(int(v) for v in x_word), TERMINATE, nu, None,
                          code.fallback_word(), float(code.announce_bits),
                          math.log2(code.N))
    t, mu = outcome
    y_word = decode(code, t, nu, mu)
    bits = math.log2(code.family_M(t)) + code.announce_bits
    return Transcript(tuple(int(v) for v in x_word), t, nu, mu, y_word, bits,
                      math.log2(code.N))


def _check_output_cap(code: SimCode):
    if code.channel.output_size ** code.n > OUTPUT_ENUM_CAP:
        raise CapExceededError("output word space exceeds the enumeration cap")


def output_distribution(code: SimCode, x_word) -> Distribution:
    """Exact law of the decoder output for a fixed input word, averaged over
    the uniform shared index and all protocol sampling."""
    if code.rates_only:
        raise InvalidInputError("code was built rates-only; rebuild with keep_words=True")
    _check_output_cap(code)
    x_word = tuple(int(v) for v in x_word)
    size = code.channel.output_size ** code.n
    out = np.zeros(size)
    spec = TypicalSpec(code.source, code.n, code.delta)
    if not is_typical(x_word, spec):
        out[0] = 1.0
        return Distribution(size, out)
    base = count_occurrences(x_word, code.source.alphabet_size)
    t_list, weights = _type_weights(code, base)
    terminate_mass = 0.0
    for t, w_t in zip(t_list, weights):
        if w_t == 0.0:
            continue
        if t not in code.families:
            terminate_mass += w_t
            continue
        tables = _tables_for(code, t)
        xi = tables.x_index[x_word]
        c = tables.c[:, xi].astype(float)
        live = c > 0
        if not live.all():
            terminate_mass += w_t * (np.count_nonzero(~live) / code.N)
        contrib = (tables.mult[live] / c[live, None]).sum(axis=0) / code.N
        contrib *= tables.compat[xi]
        np.add.at(out, tables.y_global, w_t * contrib)
    out[0] += terminate_mass
    return Distribution(size, out)


def channel_block_row(channel: Channel, x_word) -> np.ndarray:
    """The i.i.d. channel law over Y^n for one input word, lexicographic."""
    row = np.ones(1)
    for x in x_word:
        row = np.kron(row, channel.rows[int(x)])
    return row


def block_tv(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(p - q).sum())


def strong_fidelity_report(code: SimCode) -> dict:
    """Exact per-word and average fidelity of the protocol.

    For every source-typical input word the output law is compared with the
    true block channel law; the claimed ceiling is eps/(1-eps) (the covering
    corridor) plus that word's mass on non-covered joint types. The average
    error sums over all input words, typical or not.
    """
    _check_output_cap(code)
    if code.source.alphabet_size ** code.n * code.channel.output_size ** code.n \
            > BLOCK_ENUM_CAP:
        raise CapExceededError("input-output space exceeds the enumeration cap")
    n, a = code.n, code.source.alphabet_size
    spec = TypicalSpec(code.source, n, code.delta)
    per_word, bound_parts, global_err = [], [], 0.0
    p_block = np.ones(1)
    for _ in range(n):
        p_block = np.kron(p_block, code.source.probs)
    for rank in range(a ** n):
        x_word = tuple((rank // a ** (n - 1 - k)) % a for k in range(n))
        w_row = channel_block_row(code.channel, x_word)
        out = output_distribution(code, x_word).probs
        tv = block_tv(w_row, out)
        global_err += p_block[rank] * tv
        if is_typical(x_word, spec):
            base = count_occurrences(x_word, a)
            _, weights = _type_weights(code, base)
            t_list = enumerate_joint_types(n, a, code.channel.output_size, base_type=base)
            miss = sum(w for t, w in zip(t_list, weights) if t not in code.families)
            per_word.append(tv)
            bound_parts.append(code.epsilon / (1 - code.epsilon) + miss)
    atypicality = 1.0 - typical_probability_bounds(spec).exact
    return {
        "lambda_measured": max(per_word) if per_word else 1.0,
        "lambda_bound": max(bound_parts) if bound_parts else 1.0,
        "per_word_tv": per_word,
        "global_err": global_err,
        "atypicality_mass": atypicality,
    }


def averaged_block_channel(code: SimCode) -> Channel:
    """The protocol as a block channel X^n -> Y^n, averaged over nu."""
    _check_output_cap(code)
    n, a = code.n, code.source.alphabet_size
    if a ** n * code.channel.output_size ** n > BLOCK_ENUM_CAP:
        raise CapExceededError("block channel exceeds the enumeration cap")
    rows = np.empty((a ** n, code.channel.output_size ** n))
    for rank in range(a ** n):
        x_word = tuple((rank // a ** (n - 1 - k)) % a for k in range(n))
        rows[rank] = output_distribution(code, x_word).probs
    return Channel(a ** n, code.channel.output_size ** n, rows)


def fixed_nu_block_channel(code: SimCode, nu: int) -> Channel:
    """The block channel induced by pinning the shared index to one value."""
    _check_output_cap(code)
    if not 0 <= nu < code.N:
        raise InvalidInputError(f"nu {nu} outside [0, {code.N})")
    n, a = code.n, code.source.alphabet_size
    y_size = code.channel.output_size ** n
    if a ** n * y_size > BLOCK_ENUM_CAP:
        raise CapExceededError("block channel exceeds the enumeration cap")
    spec = TypicalSpec(code.source, n, code.delta)
    rows = np.zeros((a ** n, y_size))
    for rank in range(a ** n):
        x_word = tuple((rank // a ** (n - 1 - k)) % a for k in range(n))
        if not is_typical(x_word, spec):
            rows[rank, 0] = 1.0
            continue
        base = count_occurrences(x_word, a)
        t_list, weights = _type_weights(code, base)
        terminate_mass = 0.0
        for t, w_t in zip(t_list, weights):
            if w_t == 0.0:
                continue
            if t not in code.families:
                terminate_mass += w_t
                continue
            tables = _tables_for(code, t)
            xi = tables.x_index[x_word]
            c = float(tables.c[nu, xi])
            if c == 0:
                terminate_mass += w_t
                continue
            contrib = tables.mult[nu] * tables.compat[xi] / c
            np.add.at(rows[rank], tables.y_global, w_t * contrib)
        rows[rank, 0] += terminate_mass
    return Channel(a ** n, y_size, rows)


def encoder_message_law(code: SimCode, nu: int):
    """Exact law of the encoder's transmitted message for a pinned shared
    index.

    Messages are (announced_type, mu) pairs in announcement order with the
    terminate sentinel appended last. Returns (messages, cond, y_ranks):
    cond[rank, j] is the probability of message j given the rank-th input
    word (lexicographic X^n order, rows sum to 1), and y_ranks[j] is the
    lexicographic Y^n rank of the word the decoder emits on message j.
    """
    if code.rates_only:
        raise InvalidInputError("code was built rates-only; rebuild with keep_words=True")
    if not 0 <= nu < code.N:
        raise InvalidInputError(f"nu {nu} outside [0, {code.N})")
    n, a = code.n, code.source.alphabet_size
    messages = []
    offsets = {}
    for t in code.typical_joint_types:
        offsets[t] = len(messages)
        messages.extend((t, mu) for mu in range(code.records[t].M))
    messages.append(TERMINATE)
    num = len(messages)
    if a ** n * num > BLOCK_ENUM_CAP:
        raise CapExceededError("message law table exceeds the enumeration cap")
    cond = np.zeros((a ** n, num))
    y_ranks = np.zeros(num, dtype=np.int64)
    spec = TypicalSpec(code.source, n, code.delta)
    for t in code.typical_joint_types:
        tables = _tables_for(code, t)
        sel = code.families[t].words[nu]
        y_ranks[offsets[t]:offsets[t] + sel.size] = tables.y_global[sel]
    for rank in range(a ** n):
        x_word = tuple((rank // a ** (n - 1 - k)) % a for k in range(n))
        if not is_typical(x_word, spec):
            cond[rank, -1] = 1.0
            continue
        base = count_occurrences(x_word, a)
        t_list, weights = _type_weights(code, base)
        terminate_mass = 0.0
        for t, w_t in zip(t_list, weights):
            if w_t == 0.0:
                continue
            if t not in code.families:
                terminate_mass += w_t
                continue
            tables = _tables_for(code, t)
            slot_ok = tables.compat[tables.x_index[x_word]][code.families[t].words[nu]]
            hits = np.flatnonzero(slot_ok)
            if hits.size == 0:
                terminate_mass += w_t
                continue
            cond[rank, offsets[t] + hits] = w_t / hits.size
        cond[rank, -1] = terminate_mass
    return messages, cond, y_ranks


def accounting(code: SimCode):
    """Rates and the information bounds they are squeezed against."""
    rate = (code.max_log2_M() + code.announce_bits) / code.n
    cr_rate = math.log2(code.N) / code.n
    mi = mutual_information(code.source, code.channel)
    h_cond = conditional_entropy(code.source, code.channel)
    h_out = entropy(output_marginal(code.source, code.channel))
    comparisons = [
        BoundComparison("message rate >= mutual information", rate, mi,
                        rate - mi, rate >= mi - 1e-9),
        BoundComparison("message plus randomness rate >= output entropy",
                        rate + cr_rate, h_out, rate + cr_rate - h_out,
                        rate + cr_rate >= h_out - 1e-9),
    ]
    bounds = AccountingBounds(mi, h_cond, h_out, code.announce_bits, comparisons)
    return rate, cr_rate, bounds


def save_code(code: SimCode, directory: str):
    """Persist manifest plus one covering file per joint type."""
    os.makedirs(directory, exist_ok=True)
    rate, cr_rate, _ = accounting(code)
    manifest = {
        "n": code.n, "delta": code.delta, "epsilon": code.epsilon,
        "seed": code.seed, "N": code.N, "announce_bits": code.announce_bits,
        "rates_only": code.rates_only,
        "rate": rate, "cr_rate": cr_rate,
        "source": code.source.to_json_dict(),
        "channel": code.channel.to_json_dict(),
        "records": [code.records[t].to_json_dict() for t in code.typical_joint_types],
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    if not code.rates_only:
        fam_dir = os.path.join(directory, "families")
        os.makedirs(fam_dir, exist_ok=True)
        for idx, t in enumerate(code.typical_joint_types):
            with open(os.path.join(fam_dir, f"type_{idx:04d}.json"), "w") as fh:
                json.dump(code.families[t].to_json_dict(), fh)


def load_code(directory: str) -> SimCode:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    source = Distribution.from_json_dict(manifest["source"])
    channel = Channel.from_json_dict(manifest["channel"])
    records = {}
    order = []
    for doc in manifest["records"]:
        rec = FamilyRecord.from_json_dict(doc)
        records[rec.joint_type] = rec
        order.append(rec.joint_type)
    families = {}
    if not manifest["rates_only"]:
        fam_dir = os.path.join(directory, "families")
        for idx, t in enumerate(order):
            with open(os.path.join(fam_dir, f"type_{idx:04d}.json")) as fh:
                families[t] = CoveringFamily.from_json_dict(json.load(fh))
    return SimCode(n=manifest["n"], source=source, channel=channel,
                   delta=manifest["delta"], epsilon=manifest["epsilon"],
                   families=families, records=records,
                   typical_joint_types=tuple(order), N=manifest["N"],
                   announce_bits=manifest["announce_bits"], seed=manifest["seed"],
                   rates_only=manifest["rates_only"])
