"""Fidelity criteria for block codes and derandomization of shared randomness.

A code is judged as a channel from input words to output words against the
i.i.d. target. Four error measures, all with total variation as the inner
distance and all in [0, 1]:

  global_err             average over input words of the block-level TV,
  local_err              average over words and positions of the per-letter TV,
  letterwise_source_err  per-letter TV after conditioning only on that
                         letter's source symbol,
  empirical_joint_err    TV between the position-averaged input-output pair
                         distribution and the single-letter joint law.

Each is weaker than the one before it (averaging inside the TV can only
shrink it), so reports always satisfy local <= global and letterwise <= local
up to float noise.

Derandomization replaces the shared uniform index by a short list of sampled
indices: with Q past the Chernoff threshold, a uniform choice among the
sampled indices reproduces every per-letter marginal of the averaged code
within a (1 +- eps) factor, and the choice can be sent in the message at
ceil(log2 Q) bits, so no common randomness remains.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._seeds import child_rng
from .core_prob import Channel, Distribution
from .errors import CapExceededError, InvalidInputError, RetriesExhaustedError
from .simulate import (
    SimCode,
    Transcript,
    channel_block_row,
    fixed_nu_block_channel,
    run_protocol,
)
from .typeclasses import TypicalSpec, is_typical

LN2 = math.log(2.0)
FIDELITY_ENUM_CAP = 1 << 24
EXACT_VERIFY_N_CAP = 6
DEFAULT_MC_SAMPLES = 2000


@dataclass(frozen=True)
class FidelityStandardErrors:
    global_err: float
    local_err: float
    letterwise_source_err: float
    empirical_joint_err: float


@dataclass(frozen=True)
class FidelityReport:
    global_err: float
    local_err: float
    letterwise_source_err: float
    empirical_joint_err: float
    standard_errors: object = None   # FidelityStandardErrors in Monte Carlo mode

    def __post_init__(self):
        for name in ("global_err", "local_err", "letterwise_source_err",
                     "empirical_joint_err"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1.0 + 1e-12:
                raise InvalidInputError(f"{name} {v} outside [0, 1]")

    def as_text_record(self) -> str:
        return ("global_err=%.12g local_err=%.12g letterwise_source_err=%.12g "
                "empirical_joint_err=%.12g") % (
            self.global_err, self.local_err, self.letterwise_source_err,
            self.empirical_joint_err)


@dataclass(frozen=True)
class DerandomizedCode:
    selected_indices: tuple
    Q: int
    base: SimCode
    epsilon: float
    u: float
    verified: bool
    retries: int

    def index_bits(self) -> int:
        return math.ceil(math.log2(self.Q)) if self.Q > 1 else 0


def min_nonzero_entry(channel: Channel) -> float:
    rows = channel.rows
    live = rows[rows > 0]
    if live.size == 0:
        raise InvalidInputError("channel has no nonzero entries")
    return float(live.min())


def required_Q(n: int, x_size: int, y_size: int, epsilon: float, u: float) -> int:
    """Smallest sample count strictly above the Chernoff threshold
    (4 ln 2 / (eps^2 u)) * (n log2|X| + log2(2|Y|))."""
    if not 0 < epsilon < 1:
        raise InvalidInputError("epsilon must lie in (0, 1)")
    if not 0 < u <= 1:
        raise InvalidInputError("u must lie in (0, 1]")
    bound = (4 * LN2 / (epsilon ** 2 * u)) * (n * math.log2(x_size)
                                              + math.log2(2 * y_size))
    return math.floor(bound) + 1


def _family_average(family, weights):
    if isinstance(family, Channel):
        family = [family]
    if not family:
        raise InvalidInputError("empty code family")
    shape = (family[0].input_size, family[0].output_size)
    for ch in family:
        if (ch.input_size, ch.output_size) != shape:
            raise InvalidInputError("code family members differ in shape")
    if weights is None:
        weights = np.full(len(family), 1.0 / len(family))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(family),):
            raise InvalidInputError("weights length does not match family")
        if (weights < 0).any() or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
            raise InvalidInputError("weights must be a probability vector")
    rows = np.zeros((shape[0], shape[1]))
    for w, ch in zip(weights, family):
        rows += w * ch.rows
    return rows


def _infer_block_length(rows_shape, x_size: int, y_size: int) -> int:
    n = round(math.log(rows_shape[1], y_size))
    if y_size ** n != rows_shape[1] or x_size ** n != rows_shape[0]:
        raise InvalidInputError("code family shape is not a block power of the "
                                "single-letter alphabets")
    return n


def _letter_marginals(row: np.ndarray, n: int, y_size: int) -> np.ndarray:
    """Per-position output marginals of one block row, shape (n, y_size)."""
    cube = row.reshape((y_size,) * n)
    out = np.empty((n, y_size))
    for k in range(n):
        axes = tuple(i for i in range(n) if i != k)
        out[k] = cube.sum(axis=axes)
    return out


def _tv(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(p - q).sum())


def measure_fidelity(source: Distribution, channel: Channel, family,
                     weights=None, mode: str = "exact",
                     samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> FidelityReport:
    """All four fidelity criteria for a code given as a block channel or a
    weighted family of block channels (weighted averaging happens first).

    Exact mode enumerates the input space; Monte Carlo mode samples input
    words, keeps the per-word computations exact, and attaches standard
    errors (jackknife for the two criteria that average before the TV)."""
    if source.alphabet_size != channel.input_size:
        raise InvalidInputError("source alphabet does not match channel input")
    rows = _family_average(family, weights)
    a, b = channel.input_size, channel.output_size
    n = _infer_block_length(rows.shape, a, b)
    if mode == "exact":
        if rows.size > FIDELITY_ENUM_CAP:
            raise CapExceededError("exact fidelity exceeds the enumeration cap")
        return _measure_exact(source, channel, rows, n)
    if mode == "monte-carlo":
        return _measure_mc(source, channel, rows, n, samples, seed)
    raise InvalidInputError(f"unknown mode {mode!r}")


def _measure_exact(source, channel, rows, n):
    a, b = channel.input_size, channel.output_size
    eq3 = eq4 = 0.0
    cond = np.zeros((n, a, b))      # letter-k output law conditioned on x_k
    pair = np.zeros((a, b))         # position-averaged input-output pairs
    for rank in range(a ** n):
        x = tuple((rank // a ** (n - 1 - k)) % a for k in range(n))
        p_x = float(np.prod(source.probs[list(x)]))
        w_row = channel_block_row(channel, x)
        eq3 += p_x * _tv(rows[rank], w_row)
        margs = _letter_marginals(rows[rank], n, b)
        eq4 += p_x * sum(_tv(margs[k], channel.rows[x[k]]) for k in range(n)) / n
        if p_x > 0:
            for k in range(n):
                cond[k, x[k]] += p_x * margs[k]
                pair[x[k]] += p_x * margs[k] / n
    eq5 = 0.0
    for k in range(n):
        for sym in range(a):
            p_sym = source.probs[sym]
            if p_sym <= 0:
                continue
            eq5 += p_sym * _tv(cond[k, sym] / p_sym, channel.rows[sym]) / n
    joint_true = source.probs[:, None] * channel.rows
    eq6 = _tv(pair.ravel(), joint_true.ravel())
    return FidelityReport(eq3, eq4, eq5, eq6)


def _measure_mc(source, channel, rows, n, samples, seed):
    if samples < 2:
        raise InvalidInputError("Monte Carlo mode needs at least 2 samples")
    a, b = channel.input_size, channel.output_size
    rng = np.random.default_rng(seed)
    xs = rng.choice(a, size=(samples, n), p=source.probs)
    place = a ** np.arange(n - 1, -1, -1, dtype=np.int64)
    s3 = np.empty(samples)
    s4 = np.empty(samples)
    margs_all = np.empty((samples, n, b))
    for i in range(samples):
        x = xs[i]
        row = rows[int(x @ place)]
        s3[i] = _tv(row, channel_block_row(channel, x))
        m = _letter_marginals(row, n, b)
        margs_all[i] = m
        s4[i] = sum(_tv(m[k], channel.rows[x[k]]) for k in range(n)) / n

    joint_true = source.probs[:, None] * channel.rows

    def evaluate(cond_sum, cnt, pair_sum, m):
        e5 = 0.0
        for k in range(n):
            for sym in range(a):
                p_sym = source.probs[sym]
                if p_sym <= 0:
                    continue
                if cnt[k, sym] == 0:
                    e5 += p_sym / n      # unseen symbol charged in full
                    continue
                e5 += p_sym * _tv(cond_sum[k, sym] / cnt[k, sym],
                                  channel.rows[sym]) / n
        return e5, _tv(pair_sum.ravel() / m, joint_true.ravel())

    cond_sum = np.zeros((n, a, b))
    cnt = np.zeros((n, a), dtype=np.int64)
    pair_sum = np.zeros((a, b))
    for i in range(samples):
        for k in range(n):
            cond_sum[k, xs[i, k]] += margs_all[i, k]
            cnt[k, xs[i, k]] += 1
            pair_sum[xs[i, k]] += margs_all[i, k] / n

    eq5, eq6 = evaluate(cond_sum, cnt, pair_sum, samples)
    # Leave-one-out jackknife standard errors for the plug-in criteria.
    # Each replicate removes one sample's contribution from copies of the
    # totals; rebuilding the sums per replicate would be quadratic in samples.
    jack = np.empty((samples, 2))
    for i in range(samples):
        cond_i = cond_sum.copy()
        cnt_i = cnt.copy()
        pair_i = pair_sum.copy()
        for k in range(n):
            cond_i[k, xs[i, k]] -= margs_all[i, k]
            cnt_i[k, xs[i, k]] -= 1
            pair_i[xs[i, k]] -= margs_all[i, k] / n
        jack[i] = evaluate(cond_i, cnt_i, pair_i, samples - 1)
    jm = jack.mean(axis=0)
    se56 = np.sqrt((samples - 1) / samples * ((jack - jm) ** 2).sum(axis=0))
    ses = FidelityStandardErrors(
        float(s3.std(ddof=1) / math.sqrt(samples)),
        float(s4.std(ddof=1) / math.sqrt(samples)),
        float(se56[0]), float(se56[1]))
    return FidelityReport(float(np.clip(s3.mean(), 0, 1)),
                          float(np.clip(s4.mean(), 0, 1)),
                          float(np.clip(eq5, 0, 1)),
                          float(np.clip(eq6, 0, 1)), ses)


def sim_code_family(code: SimCode):
    """The code as one block channel per shared-index value, uniform weights."""
    fam = [fixed_nu_block_channel(code, nu) for nu in range(code.N)]
    return fam, np.full(code.N, 1.0 / code.N)


def derandomized_family(dcode: DerandomizedCode):
    """The fixed code as distinct-index block channels weighted by how often
    each index was sampled."""
    counts = {}
    for nu in dcode.selected_indices:
        counts[nu] = counts.get(nu, 0) + 1
    fam = [fixed_nu_block_channel(dcode.base, nu) for nu in sorted(counts)]
    weights = np.array([counts[nu] for nu in sorted(counts)], dtype=float) / dcode.Q
    return fam, weights


def _typical_letter_marginals(code: SimCode, rows):
    """Per-letter output marginals of every source-typical word under the
    given block rows, as {x_word rank: (n, y_size) array}."""
    a, b, n = code.source.alphabet_size, code.channel.output_size, code.n
    spec = TypicalSpec(code.source, n, code.delta)
    out = {}
    for rank in range(a ** n):
        x = tuple((rank // a ** (n - 1 - k)) % a for k in range(n))
        if is_typical(x, spec):
            out[rank] = _letter_marginals(rows[rank], n, b)
    return out


def derandomize(code: SimCode, epsilon: float, seed: int, max_retries: int = 64,
                verify: str = "auto") -> DerandomizedCode:
    """Sample Q shared-index values so a uniform choice among them replaces
    the common randomness.

    Exact mode (default for n <= 6) recomputes every typical word's per-letter
    marginals and requires each to stay within (1 +- eps) of the averaged
    code's value on the support of the true channel row, redrawing on failure.
    Declared mode skips verification and relies on the Chernoff bound that
    sized Q. Precondition, checked in exact mode: the averaged code's
    per-letter marginals reach u/2 on those support entries."""
    if verify not in ("auto", "exact", "declared"):
        raise InvalidInputError(f"unknown verify mode {verify!r}")
    if code.rates_only:
        raise InvalidInputError("code was built rates-only; rebuild with keep_words=True")
    if code.N == 1:
        return DerandomizedCode((0,), 1, code, epsilon, min_nonzero_entry(code.channel),
                                True, 0)
    u = min_nonzero_entry(code.channel)
    n = code.n
    Q = required_Q(n, code.source.alphabet_size, code.channel.output_size, epsilon, u)
    exact = verify == "exact" or (verify == "auto" and n <= EXACT_VERIFY_N_CAP)
    if not exact:
        rng = child_rng(seed, "derandomize:try:0")
        selected = tuple(int(v) for v in rng.integers(0, code.N, size=Q))
        return DerandomizedCode(selected, Q, code, epsilon, u, False, 0)

    per_nu = [fixed_nu_block_channel(code, nu).rows for nu in range(code.N)]
    averaged = sum(per_nu) / code.N
    base_margs = _typical_letter_marginals(code, averaged)
    supp = code.channel.rows > 0
    for rank, margs in base_margs.items():
        for k in range(n):
            x_k = (rank // code.source.alphabet_size ** (n - 1 - k)) \
                % code.source.alphabet_size
            if (margs[k][supp[x_k]] < u / 2).any():
                raise InvalidInputError(
                    "averaged per-letter marginals fall below u/2 on the "
                    "channel support; shrink epsilon or delta")
    for attempt in range(max_retries):
        rng = child_rng(seed, f"derandomize:try:{attempt}")
        selected = tuple(int(v) for v in rng.integers(0, code.N, size=Q))
        counts = np.bincount(selected, minlength=code.N)
        mixed_rows = np.tensordot(counts / Q, np.stack(per_nu), axes=1)
        mixed_margs = _typical_letter_marginals(code, mixed_rows)
        ok = True
        for rank, margs in base_margs.items():
            dev = np.abs(mixed_margs[rank] - margs)
            if (dev > epsilon * margs + 1e-12).any():
                ok = False
                break
        if ok:
            return DerandomizedCode(selected, Q, code, epsilon, u, True, attempt)
    raise RetriesExhaustedError(
        f"derandomization failed exact verification {max_retries} times")


def run_fixed_code(dcode: DerandomizedCode, x_word, seed) -> Transcript:
    """Run the base protocol with a sender-chosen index from the sampled list;
    the index rides in the message, so no common randomness is consumed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    nu = dcode.selected_indices[int(rng.integers(dcode.Q))]
    tr = run_protocol(dcode.base, x_word, nu, rng)
    return Transcript(tr.x_word, tr.announced_type, nu, tr.mu, tr.y_word,
                      tr.bits_sent + dcode.index_bits(), 0.0)
