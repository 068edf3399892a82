"""Finite probability primitives: distributions, channels, information measures.

Conventions used throughout the package:
  * all logarithms are base 2,
  * 0 * log 0 = 0, and any probability below ZERO_TOL = 1e-12 is treated as
    an exact zero inside entropy-like sums,
  * distributions and channel rows must sum to 1 within STOCH_TOL = 1e-9 at
    construction; deviations below the tolerance are renormalized away,
    larger ones are rejected.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

ZERO_TOL = 1e-12
STOCH_TOL = 1e-9


def _clean_prob_vector(v, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).copy()
    if arr.ndim != 1:
        raise InvalidInputError(f"{what} must be one dimensional")
    if arr.size == 0:
        raise InvalidInputError(f"{what} must be nonempty")
    if np.any(arr < -ZERO_TOL):
        raise InvalidInputError(f"{what} has a negative entry: {arr.min()}")
    arr[arr < 0] = 0.0
    total = arr.sum()
    if abs(total - 1.0) >= STOCH_TOL:
        raise InvalidInputError(f"{what} sums to {total}, not 1")
    arr /= total
    arr.flags.writeable = False
    return arr


@dataclass
class Distribution:
    """A probability vector over the alphabet {0, ..., alphabet_size - 1}."""

    alphabet_size: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = _clean_prob_vector(self.probs, "distribution")
        if self.alphabet_size != self.probs.size:
            raise InvalidInputError(
                f"alphabet_size {self.alphabet_size} != len(probs) {self.probs.size}")

    @classmethod
    def from_probs(cls, probs) -> "Distribution":
        probs = np.asarray(probs, dtype=float)
        return cls(probs.size, probs)

    @classmethod
    def uniform(cls, alphabet_size: int) -> "Distribution":
        return cls(alphabet_size, np.full(alphabet_size, 1.0 / alphabet_size))

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs >= ZERO_TOL)

    def to_json_dict(self) -> dict:
        return {"probs": [float(p) for p in self.probs]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Distribution":
        return cls.from_probs(doc["probs"])


@dataclass
class Channel:
    """A row-stochastic matrix: rows[x][y] = W(y | x)."""

    input_size: int
    output_size: int
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise InvalidInputError("channel rows must be a matrix")
        if rows.shape != (self.input_size, self.output_size):
            raise InvalidInputError(
                f"channel shape {rows.shape} != ({self.input_size}, {self.output_size})")
        cleaned = np.stack([_clean_prob_vector(r, f"channel row {x}")
                            for x, r in enumerate(rows)])
        cleaned.flags.writeable = False
        self.rows = cleaned

    @classmethod
    def from_rows(cls, rows) -> "Channel":
        rows = np.asarray(rows, dtype=float)
        return cls(rows.shape[0], rows.shape[1], rows)

    def row(self, x: int) -> Distribution:
        return Distribution(self.output_size, self.rows[x])

    def to_json_dict(self) -> dict:
        return {"rows": [[float(p) for p in r] for r in self.rows]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Channel":
        return cls.from_rows(doc["rows"])


@dataclass
class JointDistribution:
    """A probability matrix over pairs: probs[x][y]."""

    x_size: int
    y_size: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (self.x_size, self.y_size):
            raise InvalidInputError(
                f"joint shape {probs.shape} != ({self.x_size}, {self.y_size})")
        flat = _clean_prob_vector(probs.reshape(-1), "joint distribution")
        out = flat.reshape(self.x_size, self.y_size)
        out.flags.writeable = False
        self.probs = out

    @classmethod
    def from_source_and_channel(cls, p: Distribution, w: Channel) -> "JointDistribution":
        if p.alphabet_size != w.input_size:
            raise InvalidInputError("source alphabet does not match channel input")
        return cls(w.input_size, w.output_size, p.probs[:, None] * w.rows)

    def x_marginal(self) -> Distribution:
        return Distribution(self.x_size, self.probs.sum(axis=1))

    def y_marginal(self) -> Distribution:
        return Distribution(self.y_size, self.probs.sum(axis=0))

    def to_json_dict(self) -> dict:
        return {"probs": [[float(p) for p in r] for r in self.probs]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "JointDistribution":
        probs = np.asarray(doc["probs"], dtype=float)
        return cls(probs.shape[0], probs.shape[1], probs)


def _prob_array(p) -> np.ndarray:
    probs = getattr(p, "probs", p)
    return np.asarray(probs, dtype=float).reshape(-1)


def entropy(p) -> float:
    """Shannon entropy in bits. Accepts a Distribution, a JointDistribution,
    or a bare array of probabilities."""
    arr = _prob_array(p)
    mask = arr >= ZERO_TOL
    vals = arr[mask]
    return float(-(vals * np.log2(vals)).sum())


def binary_entropy(t: float) -> float:
    """h(t) = -t log2 t - (1-t) log2 (1-t)."""
    return entropy(np.array([t, 1.0 - t]))


def conditional_entropy(p: Distribution, w: Channel) -> float:
    """H(output | input) = sum_x P(x) H(W_x)."""
    if p.alphabet_size != w.input_size:
        raise InvalidInputError("source alphabet does not match channel input")
    return float(sum(p.probs[x] * entropy(w.rows[x])
                     for x in range(w.input_size) if p.probs[x] >= ZERO_TOL))


def output_marginal(p: Distribution, w: Channel) -> Distribution:
    """The output distribution PW of source p pushed through channel w."""
    if p.alphabet_size != w.input_size:
        raise InvalidInputError("source alphabet does not match channel input")
    return Distribution(w.output_size, p.probs @ w.rows)


def mutual_information(p: Distribution, w: Channel) -> float:
    """I(input; output) = H(PW) - H(output | input)."""
    return entropy(output_marginal(p, w)) - conditional_entropy(p, w)


def tv_distance(p, q) -> float:
    """Total variation distance (1/2) sum |p - q|."""
    a, b = _prob_array(p), _prob_array(q)
    if a.shape != b.shape:
        raise InvalidInputError("tv_distance requires equal-length vectors")
    return float(0.5 * np.abs(a - b).sum())


def transpose_channel(p: Distribution, w: Channel, *, with_unreachable: bool = False):
    """Reverse the joint distribution P(x) W(y|x) = Q(y) V(x|y).

    Returns (q, v). Output symbols y with Q(y) = 0 get a uniform row in v;
    pass with_unreachable=True to also receive the tuple of those symbols.
    """
    joint = JointDistribution.from_source_and_channel(p, w)
    q_vec = joint.probs.sum(axis=0)
    v_rows = np.empty((w.output_size, w.input_size))
    unreachable = []
    for y in range(w.output_size):
        if q_vec[y] < ZERO_TOL:
            v_rows[y] = 1.0 / w.input_size
            unreachable.append(y)
        else:
            v_rows[y] = joint.probs[:, y] / q_vec[y]
    q = Distribution(w.output_size, q_vec)
    v = Channel(w.output_size, w.input_size, v_rows)
    if with_unreachable:
        return q, v, tuple(unreachable)
    return q, v


def channel_compose(first: Channel, second: Channel) -> Channel:
    """The channel obtained by feeding first's output into second."""
    if first.output_size != second.input_size:
        raise InvalidInputError("channels are not composable")
    return Channel(first.input_size, second.output_size, first.rows @ second.rows)


def entropy_continuity_bound(p: Distribution, q: Distribution) -> float:
    """Bound |H(p) - H(q)| <= -lam * log2(lam / a) where lam = sum |p - q|
    (twice the total variation distance) and a is the alphabet size.

    Only valid for lam <= 1/2; larger lam raises InvalidInputError.
    """
    if p.alphabet_size != q.alphabet_size:
        raise InvalidInputError("alphabets differ")
    lam = float(np.abs(p.probs - q.probs).sum())
    if lam > 0.5 + ZERO_TOL:
        raise InvalidInputError(f"continuity bound needs sum|p-q| <= 1/2, got {lam}")
    if lam < ZERO_TOL:
        return 0.0
    return float(-lam * np.log2(lam / p.alphabet_size))


def rate_lower_bound_defect(lam: float, x_size: int, y_size: int) -> float:
    """The additive defect f(lam) = lam (log2|X| + 2 log2|Y|) + 2 h(lam)
    appearing in the converse rate bound for simulations with error lam.

    Only valid for 0 <= lam <= 1/2.
    """
    if not 0.0 <= lam <= 0.5 + ZERO_TOL:
        raise InvalidInputError(f"defect formula needs 0 <= lam <= 1/2, got {lam}")
    return float(lam * (np.log2(x_size) + 2 * np.log2(y_size)) + 2 * binary_entropy(lam))
