"""Covering families of conditional type classes.

A covering family for a joint type T with row marginal R and column marginal
S consists of N lists of M words drawn from the class of S. Write c_nu(x) for
the number of entries of list nu that are compatible with x (i.e. form joint
type T with it). The family is good when

  (I)  for every list nu and every x in the class of R,
       c_nu(x) is within (1 +- eps) of its mean M |T_T| / (|T_R| |T_S|), and
  (II) for every y in the class of S, the total number of occurrences of y
       across all lists is within (1 +- eps) of N M / |T_S|.

Condition (I) makes the uniform distribution over compatible entries of any
single list imitate the per-letter channel on the class; condition (II)
makes the whole family blanket the class of S evenly. Random families of the
threshold size succeed with constant probability, so construction is
rejection sampling with verification.

Margins are reported in eps units: margin = eps - max relative deviation, so
any nonnegative margin means the condition holds.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._seeds import child_rng
from .errors import InvalidInputError, RetriesExhaustedError
from .typeclasses import (
    ExactType,
    JointType,
    enumerate_type_class,
    joint_type_class_size,
    type_class_size,
)

LN2 = math.log(2.0)
DEFAULT_MAX_RETRIES = 64


def lemma2_failure_bound(K_size: int, M: int, eta: float, s: float) -> float:
    """Union-of-Chernoff failure probability bound for M uniform draws
    hitting K_size target cells of relative mass s within (1 +- eta):
    2 K_size 2^(-M eta^2 s / (2 ln 2)). Requires 0 < eta < 1/2 and s > 0."""
    if not 0.0 < eta < 0.5:
        raise InvalidInputError(f"eta must lie in (0, 1/2), got {eta}")
    if s <= 0.0:
        raise InvalidInputError(f"s must be positive, got {s}")
    if K_size < 1 or M < 1:
        raise InvalidInputError("K_size and M must be positive")
    return float(2.0 * K_size * 2.0 ** (-(M * eta * eta * s) / (2.0 * LN2)))


def _class_sizes(t: JointType):
    size_r = type_class_size(t.row_marginal())
    size_s = type_class_size(t.col_marginal())
    size_t = joint_type_class_size(t)
    return size_r, size_s, size_t


def _min_M_condition_I(t: JointType, epsilon: float, N: int) -> int:
    size_r, size_s, size_t = _class_sizes(t)
    ratio = size_r * size_s / size_t
    rhs = (2.0 * LN2 / epsilon**2) * ratio * math.log2(4.0 * N * size_r)
    return int(math.floor(rhs)) + 1


def _rhs_condition_II(t: JointType, epsilon: float) -> float:
    size_s = type_class_size(t.col_marginal())
    return (2.0 * LN2 / epsilon**2) * size_s * math.log2(4.0 * size_s)


def required_M_N(t: JointType, epsilon: float, forced_N: int = None):
    """Smallest (M, N) satisfying both covering inequalities.

    Starts from N = 1 and alternates the two thresshold formulas until they
    agree; each pass only raises N, so the loop terminates. With forced_N the
    list count is pinned and only M is computed.
    """
    if not 0.0 < epsilon < 0.5:
        raise InvalidInputError("epsilon must lie in (0, 1/2)")
    rhs_ii = _rhs_condition_II(t, epsilon)
    if forced_N is not None:
        M = _min_M_condition_I(t, epsilon, forced_N)
        M = max(M, int(math.floor(rhs_ii / forced_N)) + 1)
        return M, forced_N
    N = 1
    while True:
        M = _min_M_condition_I(t, epsilon, N)
        if N * M > rhs_ii:
            return M, N
        N = int(math.floor(rhs_ii / M)) + 1


@dataclass
class CoveringFamily:
    """N lists of M words from the class of the column marginal of joint_type,
    stored as ranks into the lexicographic enumeration of that class."""

    joint_type: JointType
    N: int
    M: int
    words: np.ndarray  # shape (N, M), integer ranks
    epsilon: float
    retries: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise InvalidInputError("epsilon must lie in (0, 1/2)")
        words = np.asarray(self.words)
        if words.shape != (self.N, self.M):
            raise InvalidInputError(f"words shape {words.shape} != ({self.N}, {self.M})")
        size_s = type_class_size(self.joint_type.col_marginal())
        if words.size and (words.min() < 0 or words.max() >= size_s):
            raise InvalidInputError("word rank outside the column-marginal class")
        self.words = words
        self._y_words = None

    def y_class_words(self) -> np.ndarray:
        """The lexicographic enumeration of the column-marginal class, as an
        array of shape (|T_S|, n)."""
        if self._y_words is None:
            self._y_words = np.asarray(
                enumerate_type_class(self.joint_type.col_marginal()), dtype=np.int64)
        return self._y_words

    def word(self, nu: int, mu: int) -> tuple:
        return tuple(int(s) for s in self.y_class_words()[self.words[nu, mu]])

    def to_json_dict(self) -> dict:
        return {
            "joint_type": self.joint_type.to_json_dict(),
            "N": int(self.N),
            "M": int(self.M),
            "epsilon": float(self.epsilon),
            "retries": int(self.retries),
            "words": [[int(r) for r in row] for row in self.words],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CoveringFamily":
        return cls(
            joint_type=JointType.from_json_dict(doc["joint_type"]),
            N=int(doc["N"]),
            M=int(doc["M"]),
            words=np.asarray(doc["words"], dtype=np.int64),
            epsilon=float(doc["epsilon"]),
            retries=int(doc.get("retries", 0)),
        )


@dataclass
class CoveringCheck:
    condition_I_margin: np.ndarray  # per list nu, in eps units
    condition_II_margin: float
    passed: bool


def compatibility_matrix(t: JointType, x_words: np.ndarray, y_words: np.ndarray) -> np.ndarray:
    """Boolean matrix: entry (i, j) says whether (x_words[i], y_words[j]) has
    joint type exactly t. Computed cell by cell with indicator products."""
    n = t.n
    ok = np.ones((x_words.shape[0], y_words.shape[0]), dtype=bool)
    for a in range(t.x_size):
        xa = (x_words == a).astype(np.int32)
        for b in range(t.y_size):
            yb = (y_words == b).astype(np.int32)
            ok &= (xa @ yb.T) == t.counts[a][b]
    return ok


def verify_covering(family: CoveringFamily, x_words: np.ndarray = None) -> CoveringCheck:
    """Exact exhaustive verification of both covering conditions.

    Margins depend only on the multiset of entries per list, so they are
    invariant under permuting words within a list and permuting lists.
    """
    t = family.joint_type
    size_r, size_s, size_t = _class_sizes(t)
    if x_words is None:
        x_words = np.asarray(enumerate_type_class(t.row_marginal()), dtype=np.int64)
    y_words = family.y_class_words()

    # multiplicity of each y-class rank in each list
    mult = np.zeros((family.N, size_s), dtype=np.int64)
    for nu in range(family.N):
        mult[nu] = np.bincount(family.words[nu], minlength=size_s)

    compat = compatibility_matrix(t, x_words, y_words)
    counts = mult @ compat.T.astype(np.int64)  # c_nu(x), shape (N, |T_R|)

    mean_i = family.M * size_t / (size_r * size_s)
    dev_i = np.abs(counts / mean_i - 1.0)
    margin_i = family.epsilon - dev_i.max(axis=1)

    mean_ii = family.N * family.M / size_s
    dev_ii = np.abs(mult.sum(axis=0) / mean_ii - 1.0)
    margin_ii = float(family.epsilon - dev_ii.max())

    passed = bool(margin_ii >= 0.0 and np.all(margin_i >= 0.0))
    return CoveringCheck(margin_i, margin_ii, passed)


def build_covering(t: JointType, epsilon: float, mode: str = "guaranteed",
                   M: int = None, N: int = None, seed: int = 0,
                   max_retries: int = DEFAULT_MAX_RETRIES,
                   forced_N: int = None) -> CoveringFamily:
    """Rejection-sample a covering family and verify it exactly.

    mode "guaranteed" sizes (M, N) from the threshold formulas (optionally
    with the list count pinned to forced_N); mode "sized" uses the caller's
    M and N. Draws fresh words until verification passes; raises
    RetriesExhaustedError after max_retries failures.
    """
    if mode == "guaranteed":
        M, N = required_M_N(t, epsilon, forced_N=forced_N)
    elif mode == "sized":
        if M is None or N is None:
            raise InvalidInputError("sized mode needs explicit M and N")
        if not 0.0 < epsilon < 0.5:
            raise InvalidInputError("epsilon must lie in (0, 1/2)")
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    size_s = type_class_size(t.col_marginal())
    x_words = np.asarray(enumerate_type_class(t.row_marginal()), dtype=np.int64)
    for attempt in range(max_retries):
        # per-list seed streams keep results independent of scheduling
        words = np.empty((N, M), dtype=np.int32)
        for nu in range(N):
            rng = child_rng(seed, f"covering:try:{attempt}:nu:{nu}")
            words[nu] = rng.integers(0, size_s, size=M, dtype=np.int32)
        family = CoveringFamily(t, N, M, words, epsilon, retries=attempt)
        if verify_covering(family, x_words=x_words).passed:
            return family
    raise RetriesExhaustedError(
        f"covering for joint type {t.counts} failed verification {max_retries} times")
