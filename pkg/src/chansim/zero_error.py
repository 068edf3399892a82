"""Exact channel factorization with minimal intermediate entropy.

Given a source P on X and a channel W from X to Y, find stochastic maps
E (X to C) and D (C to Y) with D after E equal to W exactly, minimizing the
entropy of the intermediate distribution mu_c = sum_x P(x) E(c|x). The
intermediate symbol is what actually needs to be transmitted when the
reconstruction must be perfect rather than approximate.

Structure used by the solver: for fixed D the feasible E rows form a product
of polytopes, and the concave objective H(mu) attains its minimum at a
per-row extreme point with at most |Y| nonzero entries, so the E-step
enumerates basic feasible solutions exactly. For fixed E the feasible D set
is affine and the D-step maximizes the concave mixture entropy
sum_c mu_c H(D row c) by projected gradient ascent; this cannot change H(mu)
but widens the next E-step's polytope. Alternation therefore never increases
the objective. A simplex-grid brute force provides independent certification
on small instances.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._seeds import child_rng
from .core_prob import Channel, Distribution, entropy, mutual_information
from .errors import CapExceededError, InfeasibleError, InvalidInputError

FEAS_TOL = 1e-7
SOLVE_TOL = 1e-9
D_STEP_TOL = 1e-8
ALTERNATE_TOL = 1e-9
EXACT_COMBO_CAP = 20000
ORACLE_XY_CAP = 3
ORACLE_C_CAP = 4


@dataclass(frozen=True)
class ZeroErrorInstance:
    source: Distribution
    channel: Channel
    c_max: int

    def __post_init__(self):
        if self.source.alphabet_size != self.channel.input_size:
            raise InvalidInputError("source alphabet does not match channel input")
        if self.c_max < 1:
            raise InvalidInputError("c_max must be positive")

    @classmethod
    def build(cls, source, channel, c_max=None):
        if c_max is None:
            c_max = intermediate_size_bound(channel.input_size,
                                            channel.output_size, "thm9")
        return cls(source, channel, c_max)

    def to_json_dict(self) -> dict:
        return {"source": self.source.to_json_dict(),
                "channel": self.channel.to_json_dict(), "c_max": self.c_max}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ZeroErrorInstance":
        return cls(Distribution.from_json_dict(doc["source"]),
                   Channel.from_json_dict(doc["channel"]), int(doc["c_max"]))


@dataclass(frozen=True)
class Factorization:
    E: Channel
    D: Channel
    mu: Distribution
    objective: float
    trace: tuple = ()
    accuracy: float = None

    def to_json_dict(self) -> dict:
        doc = {"E": self.E.to_json_dict(), "D": self.D.to_json_dict(),
               "mu": self.mu.to_json_dict(), "objective": self.objective,
               "trace": list(self.trace)}
        if self.accuracy is not None:
            doc["accuracy"] = self.accuracy
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Factorization":
        return cls(Channel.from_json_dict(doc["E"]), Channel.from_json_dict(doc["D"]),
                   Distribution.from_json_dict(doc["mu"]), float(doc["objective"]),
                   tuple(doc.get("trace", ())), doc.get("accuracy"))


def intermediate_size_bound(x_size: int, y_size: int, variant: str = "thm9") -> int:
    """Largest intermediate alphabet an optimal factorization can need."""
    if x_size < 1 or y_size < 1:
        raise InvalidInputError("alphabet sizes must be positive")
    if variant == "thm9":
        return x_size * y_size - 1
    if variant == "remark2":
        if x_size < 2 or y_size < 2:
            raise InvalidInputError("remark2 bound needs both alphabets >= 2")
        return x_size * y_size - y_size + 1
    raise InvalidInputError(f"unknown variant {variant!r}")


def feasible_check(instance: ZeroErrorInstance, E: Channel, D: Channel):
    """Whether D composed with E reproduces the channel; returns
    (ok, residual) with residual = max absolute entrywise deviation."""
    if E.input_size != instance.channel.input_size \
            or E.output_size != D.input_size \
            or D.output_size != instance.channel.output_size:
        raise InvalidInputError("factor dimensions do not match the instance")
    residual = float(np.abs(E.rows @ D.rows - instance.channel.rows).max())
    return residual <= FEAS_TOL, residual


def _mu_of(instance: ZeroErrorInstance, e_rows: np.ndarray) -> np.ndarray:
    return instance.source.probs @ e_rows


def _entropy_fast(p: np.ndarray) -> float:
    live = p[p > 1e-12]
    return float(-(live * np.log2(live)).sum())


def make_factorization(instance: ZeroErrorInstance, e_rows, d_rows,
                       trace=(), accuracy=None) -> Factorization:
    e_rows = np.asarray(e_rows, dtype=float)
    d_rows = np.asarray(d_rows, dtype=float)
    # squeeze out sub-1e-9 stochasticity drift from the iterative projections
    e_rows = e_rows / e_rows.sum(axis=1, keepdims=True)
    d_rows = d_rows / d_rows.sum(axis=1, keepdims=True)
    E = Channel(instance.channel.input_size, d_rows.shape[0], e_rows)
    D = Channel(d_rows.shape[0], instance.channel.output_size, d_rows)
    ok, residual = feasible_check(instance, E, D)
    if not ok:
        raise InfeasibleError(f"factorization residual {residual:.3g} exceeds "
                              f"{FEAS_TOL:g}")
    mu = Distribution(D.input_size, _mu_of(instance, E.rows))
    return Factorization(E, D, mu, entropy(mu), tuple(trace), accuracy)


def row_vertices(d_rows: np.ndarray, w_row: np.ndarray):
    """Extreme points of {e >= 0 : e @ d_rows = w_row}, each with at most
    |Y| nonzero entries, sorted by support pattern for deterministic ties."""
    c_size, y_size = d_rows.shape
    found = []
    seen = set()
    for r in range(1, min(y_size, c_size) + 1):
        for supp in itertools.combinations(range(c_size), r):
            a = d_rows[list(supp)].T
            sol, _, rank, _ = np.linalg.lstsq(a, w_row, rcond=None)
            if rank < r or (sol < -SOLVE_TOL).any():
                continue
            e = np.zeros(c_size)
            e[list(supp)] = np.clip(sol, 0.0, None)
            if np.abs(e @ d_rows - w_row).max() > SOLVE_TOL:
                continue
            key = tuple(np.round(e, 10))
            if key not in seen:
                seen.add(key)
                found.append((tuple(np.flatnonzero(e > SOLVE_TOL)), e))
    found.sort(key=lambda se: (se[0], tuple(np.round(se[1], 12))))
    return [e for _, e in found]


def e_step(instance: ZeroErrorInstance, d_rows: np.ndarray,
           exact_cap: int = None) -> np.ndarray:
    """E rows minimizing H(mu) for fixed D: exact search over per-row vertex
    combinations when their product is small, coordinate descent otherwise."""
    if exact_cap is None:
        exact_cap = EXACT_COMBO_CAP
    d_rows = np.asarray(d_rows, dtype=float)
    p = instance.source.probs
    per_x = []
    for x in range(instance.channel.input_size):
        verts = row_vertices(d_rows, instance.channel.rows[x])
        if not verts:
            raise InfeasibleError(f"no nonnegative decomposition of channel "
                                  f"row {x} over the given D")
        per_x.append(verts)
    counts = [len(v) for v in per_x]
    total = math.prod(counts)
    if total <= exact_cap:
        best_h, best = None, None
        for combo in itertools.product(*(range(c) for c in counts)):
            mu = sum(p[x] * per_x[x][i] for x, i in enumerate(combo))
            h = _entropy_fast(mu)
            if best_h is None or h < best_h - 1e-12:
                best_h, best = h, combo
        return np.vstack([per_x[x][i] for x, i in enumerate(best)])
    # coordinate descent over vertices from the lexicographically first corner
    choice = [0] * len(counts)
    improved = True
    while improved:
        improved = False
        for x in range(len(counts)):
            contrib = sum(p[z] * per_x[z][choice[z]]
                          for z in range(len(counts)) if z != x)
            best_h, best_i = None, choice[x]
            for i in range(counts[x]):
                h = _entropy_fast(contrib + p[x] * per_x[x][i])
                if best_h is None or h < best_h - 1e-12:
                    best_h, best_i = h, i
            if best_i != choice[x]:
                choice[x] = best_i
                improved = True
    return np.vstack([per_x[x][choice[x]] for x in range(len(counts))])


class _AffineProjector:
    """Euclidean projection onto {D : E @ D = W, rows of D sum to 1}."""

    def __init__(self, e_rows: np.ndarray, w_rows: np.ndarray):
        x_size, c_size = e_rows.shape
        y_size = w_rows.shape[1]
        n_vars = c_size * y_size
        rows, rhs = [], []
        for x in range(x_size):
            for y in range(y_size):
                a = np.zeros(n_vars)
                a[y::y_size] = e_rows[x]
                rows.append(a)
                rhs.append(w_rows[x, y])
        for c in range(c_size):
            a = np.zeros(n_vars)
            a[c * y_size:(c + 1) * y_size] = 1.0
            rows.append(a)
            rhs.append(1.0)
        self.A = np.vstack(rows)
        self.b = np.array(rhs)
        self.shape = (c_size, y_size)
        self.correction = self.A.T @ np.linalg.pinv(self.A @ self.A.T)

    def affine(self, d_rows: np.ndarray) -> np.ndarray:
        v = d_rows.ravel()
        v = v - self.correction @ (self.A @ v - self.b)
        return v.reshape(self.shape)

    def onto_feasible(self, d_rows: np.ndarray, iters: int = 500):
        """Dykstra alternation between the affine set and the nonnegative
        orthant; returns (point, satisfied)."""
        x = np.asarray(d_rows, dtype=float)
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(iters):
            y = self.affine(x + p)
            p = x + p - y
            x_new = np.maximum(y + q, 0.0)
            q = y + q - x_new
            if np.abs(x_new - x).max() < 1e-12:
                x = x_new
                break
            x = x_new
        ok = (x >= -SOLVE_TOL).all() and \
            np.abs(self.A @ x.ravel() - self.b).max() <= FEAS_TOL
        return np.clip(x, 0.0, None), ok


def d_step(instance: ZeroErrorInstance, e_rows: np.ndarray,
           d_start: np.ndarray = None, max_iters: int = 500) -> np.ndarray:
    """D maximizing the mixture entropy sum_c mu_c H(D row c) over the
    feasibility set, by projected gradient ascent with backtracking.

    Rows whose intermediate symbol is unreachable are free (they carry no
    weight in the maximized mixture, so any completion is maximal); they are
    recycled as channel rows, which hands the next E-step ready-made routing
    targets instead of wasting the dead symbols."""
    e_rows = np.asarray(e_rows, dtype=float)
    proj = _AffineProjector(e_rows, instance.channel.rows)
    if d_start is None:
        d_start = np.full(proj.shape, 1.0 / proj.shape[1])
    d, ok = proj.onto_feasible(d_start)
    if not ok:
        raise InfeasibleError("no feasible D for the given E")
    mu = _mu_of(instance, e_rows)

    def objective(rows):
        vals = 0.0
        for c in range(rows.shape[0]):
            if mu[c] > 1e-12:
                vals += mu[c] * _entropy_fast(rows[c])
        return vals

    f = objective(d)
    step = 1.0
    for _ in range(max_iters):
        grad = np.zeros_like(d)
        for c in range(d.shape[0]):
            if mu[c] > 1e-12:
                grad[c] = -mu[c] * (np.log2(np.clip(d[c], 1e-12, None)) + 1 / math.log(2))
        moved = False
        while step > 1e-12:
            cand, ok = proj.onto_feasible(d + step * grad)
            if ok:
                f_cand = objective(cand)
                if f_cand > f + 1e-15:
                    gain = f_cand - f
                    d, f = cand, f_cand
                    step = min(step * 2.0, 1.0)
                    moved = True
                    break
            step *= 0.5
        if not moved or gain < D_STEP_TOL:
            break
    dead = np.flatnonzero(e_rows.max(axis=0) <= 1e-12)
    for j, c in enumerate(dead):
        d[c] = instance.channel.rows[j % instance.channel.input_size]
    return d


def _trivial_init(instance: ZeroErrorInstance):
    """Route each input to its own intermediate symbol; objective H(P)."""
    x_size = instance.channel.input_size
    c = instance.c_max
    if c < x_size:
        return None
    e_rows = np.zeros((x_size, c))
    e_rows[np.arange(x_size), np.arange(x_size)] = 1.0
    d_rows = np.full((c, instance.channel.output_size),
                     1.0 / instance.channel.output_size)
    d_rows[:x_size] = instance.channel.rows
    return e_rows, d_rows


def _random_init(instance: ZeroErrorInstance, rng, tries: int = 200):
    c = instance.c_max
    y = instance.channel.output_size
    for _ in range(tries):
        d_rows = rng.dirichlet(np.ones(y), size=c)
        try:
            e_rows = e_step(instance, d_rows)
        except InfeasibleError:
            continue
        return e_rows, d_rows
    return None


def alternate(instance: ZeroErrorInstance, seed: int = 0, restarts: int = 20,
              max_iters: int = 200) -> Factorization:
    """Best factorization over restarts of e_step/d_step alternation.

    Restart 0 starts from the route-through code (always feasible when
    c_max >= |X|); later restarts draw random stochastic D and keep it only
    if every channel row decomposes. Iteration stops when the objective
    improves by less than 1e-9; the per-iteration objective is traced."""
    best = None
    for restart in range(restarts):
        if restart == 0:
            init = _trivial_init(instance)
        else:
            init = _random_init(instance, child_rng(seed, f"zero_error:restart:{restart}"))
        if init is None:
            continue
        e_rows, d_rows = init
        trace = [_entropy_fast(_mu_of(instance, e_rows))]
        for _ in range(max_iters):
            d_rows = d_step(instance, e_rows, d_start=d_rows)
            e_rows = e_step(instance, d_rows)
            h = _entropy_fast(_mu_of(instance, e_rows))
            trace.append(h)
            if trace[-2] - h < ALTERNATE_TOL:
                break
        fact = make_factorization(instance, e_rows, d_rows, trace=trace)
        if best is None or fact.objective < best.objective - 1e-12:
            best = fact
    if best is None:
        raise InfeasibleError("no feasible initialization found; raise c_max")
    return best


def _simplex_grid(y_size: int, resolution: int):
    for parts in itertools.combinations_with_replacement(range(resolution + 1),
                                                         y_size - 1):
        cuts = (0,) + parts + (resolution,)
        yield np.diff(cuts) / resolution


def brute_force_oracle(instance: ZeroErrorInstance,
                       grid_resolution: int) -> Factorization:
    """Exhaustive minimum over D with rows on a simplex grid (one exact
    e_step per candidate). Declared accuracy is an empirical Lipschitz
    modulus near the optimum times the grid pitch."""
    x_size = instance.channel.input_size
    y_size = instance.channel.output_size
    if x_size > ORACLE_XY_CAP or y_size > ORACLE_XY_CAP:
        raise CapExceededError("oracle alphabet cap exceeded")
    if instance.c_max > ORACLE_C_CAP:
        raise CapExceededError("oracle intermediate-size cap exceeded")
    if grid_resolution < 2:
        raise InvalidInputError("grid resolution must be at least 2")
    rows = [np.asarray(r) for r in _simplex_grid(y_size, grid_resolution)]
    best_h, best_e, best_d = None, None, None
    # D rows are exchangeable, so multisets of grid rows suffice
    for combo in itertools.combinations_with_replacement(range(len(rows)),
                                                         instance.c_max):
        d_rows = np.vstack([rows[i] for i in combo])
        try:
            e_rows = e_step(instance, d_rows)
        except InfeasibleError:
            continue
        h = _entropy_fast(_mu_of(instance, e_rows))
        if best_h is None or h < best_h - 1e-12:
            best_h, best_e, best_d = h, e_rows, d_rows
    if best_h is None:
        raise InfeasibleError("no feasible D on the grid; raise resolution")
    pitch = y_size / grid_resolution
    modulus = _local_modulus(instance, best_d, best_h, grid_resolution)
    accuracy = modulus * pitch * instance.c_max + 1e-9
    return make_factorization(instance, best_e, best_d, accuracy=accuracy)


def _local_modulus(instance, d_rows, h_at, resolution):
    """Largest observed objective change per unit l1 move of one D row,
    probed at grid neighbors of the optimum."""
    y_size = d_rows.shape[1]
    worst = 0.0
    for c in range(d_rows.shape[0]):
        for up in range(y_size):
            for down in range(y_size):
                if up == down:
                    continue
                cand = d_rows.copy()
                cand[c, up] += 1.0 / resolution
                cand[c, down] -= 1.0 / resolution
                if cand[c, down] < -SOLVE_TOL or cand[c, up] > 1 + SOLVE_TOL:
                    continue
                cand[c] = np.clip(cand[c], 0.0, None)
                try:
                    e_rows = e_step(instance, cand)
                except InfeasibleError:
                    continue
                h = _entropy_fast(_mu_of(instance, e_rows))
                worst = max(worst, abs(h - h_at) / (2.0 / resolution))
    return max(worst, 1e-6)


def product_instance(instance: ZeroErrorInstance, c_max: int = None) -> ZeroErrorInstance:
    """The two-letter block instance (P x P, W x W) for sub-additivity probes."""
    p = instance.source.probs
    w = instance.channel.rows
    p2 = np.kron(p, p)
    w2 = np.kron(w, w)
    src = Distribution(p2.size, p2)
    ch = Channel(w2.shape[0], w2.shape[1], w2)
    if c_max is None:
        c_max = intermediate_size_bound(ch.input_size, ch.output_size, "thm9")
    return ZeroErrorInstance(src, ch, c_max)


def gamma_bracket(instance: ZeroErrorInstance, single_letter: float,
                  two_letter: float = None):
    """Bracket for the asymptotic perfect-restitution rate: mutual
    information below, best per-letter achieved value above."""
    lower = mutual_information(instance.source, instance.channel)
    upper = single_letter if two_letter is None \
        else min(single_letter, two_letter / 2.0)
    if upper < lower - 1e-9:
        raise InvalidInputError("bracket inverted; factorization values "
                                "are inconsistent")
    return lower, upper
