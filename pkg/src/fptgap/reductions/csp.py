"""k-MaxCoverage -> valued 2-CSP -> weighted 2-CSP.

Three stages and their composition:

* :func:`universe_reduce` subsamples the universe down to ``m`` elements with
  independent Bernoulli(p) draws ``Y[u, j]``; element ``j`` joins ``S'_i`` iff
  some ``u`` in ``S_i`` drew a one.
* :func:`cov_to_vcsp` builds set variables ``x_1..x_k`` and block variables
  ``y_1..y_M`` whose symbols say which chosen set (or none) covers each element
  of the block.  Its value is exactly ``OPT / (k*M)``.
* :func:`vcsp_to_csp` guesses a per-edge level ``theta_e`` and turns each
  valued edge into a hard constraint ``f_e >= gamma*theta_e/B``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Iterator, Sequence, Union

import numpy as np

from ..errors import BudgetExceeded, ParameterError
from ..instances import (
    ColoredSetSystem,
    CspEdge,
    SetSystem,
    ValuedTwoCsp,
    VcspEdge,
    WeightedTwoCsp,
)
from ..oracles import DEFAULT_BUDGET, maximize_edge_sum

AnySetSystem = Union[SetSystem, ColoredSetSystem]

_MASK64 = (1 << 64) - 1


# --------------------------------------------------------------------------
# universe reduction

@dataclass(frozen=True)
class UniverseReductionParams:
    k: int
    tau: Fraction
    delta: Fraction
    seed: int
    m_override: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau", Fraction(self.tau))
        object.__setattr__(self, "delta", Fraction(self.delta))
        if not 0 < self.delta <= Fraction(1, 2):
            raise ParameterError(f"delta={self.delta} outside (0, 1/2]")
        if not 0 < self.tau <= 1:
            raise ParameterError(f"tau={self.tau} outside (0, 1]")
        if self.k < 1:
            raise ParameterError(f"k={self.k} must be positive")
        if self.m_override is not None and self.m_override < 1:
            raise ParameterError(f"m_override={self.m_override} must be >= 1")


def reduced_universe_size(k: int, delta: Fraction, n: int) -> int:
    """ceil(12 k delta^-9 ln n), evaluated in 60-digit decimal arithmetic."""
    coef = Fraction(12 * k) / Fraction(delta) ** 9
    with localcontext() as ctx:
        ctx.prec = 60
        x = Decimal(coef.numerator) / Decimal(coef.denominator) * Decimal(n).ln()
        return int(x.to_integral_value(rounding="ROUND_CEILING"))


def sample_probability(tau: Fraction, delta: Fraction, universe_size: int) -> Fraction:
    p = Fraction(delta) / (Fraction(tau) * universe_size)
    if p > 1:
        raise ParameterError(f"p = delta/(tau*|U|) = {p} > 1")
    return p


def bernoulli_draws(seed: int, u: int, m: int, p: Fraction) -> np.ndarray:
    """Y[u, 0..m-1] from a Philox stream keyed by (seed, u).

    Output j is the j-th counter value, so draws never depend on set membership
    or on m beyond truncation.
    """
    if p >= 1:
        return np.ones(m, dtype=bool)
    raw = np.random.Philox(key=(seed & _MASK64) | (u << 64)).random_raw(m)
    threshold = -((-p.numerator << 64) // p.denominator)  # ceil(p * 2^64)
    return raw < np.uint64(threshold)


@dataclass(frozen=True)
class UniverseReduction:
    system: AnySetSystem
    m: int
    p: Fraction | None


def universe_reduce(ss: AnySetSystem, params: UniverseReductionParams) -> UniverseReduction:
    base = ss.base if isinstance(ss, ColoredSetSystem) else ss
    n, size = base.n_sets, base.universe_size
    if n < 2:
        raise ParameterError(f"need at least 2 sets, got {n}")
    if size < 1:
        raise ParameterError("empty universe")
    if params.tau * size < 1:
        raise ParameterError(f"tau*|U| = {params.tau * size} < 1")
    m = params.m_override if params.m_override is not None else reduced_universe_size(params.k, params.delta, n)
    if m < 1:
        raise ParameterError("reduced universe size m = 0")
    p = sample_probability(params.tau, params.delta, size)
    used = sorted({e for s in base.sets for e in s})
    hits = {u: bernoulli_draws(params.seed, u, m, p) for u in used}
    new_sets = []
    for s in base.sets:
        row = np.zeros(m, dtype=bool)
        for u in s:
            row |= hits[u]
        new_sets.append(np.flatnonzero(row).tolist())
    reduced = SetSystem(m, new_sets)
    if isinstance(ss, ColoredSetSystem):
        reduced = ColoredSetSystem(reduced, ss.color_of, ss.k)
    return UniverseReduction(reduced, m, p)


# --------------------------------------------------------------------------
# coverage -> valued CSP

def block_count(universe_size: int, k: int, n_sets: int) -> int:
    """ceil(|U| ln k / ln |S|), clamped to >= 1.

    Computed exactly as the least M with |S|^M >= k^|U|.
    """
    if n_sets < 2:
        raise ParameterError(f"need at least 2 sets, got {n_sets}")
    target = k ** universe_size
    M, power = 0, 1
    while power < target:
        power *= n_sets
        M += 1
    return max(M, 1)


def equal_blocks(m: int, M: int) -> list[list[int]]:
    """Consecutive blocks; the first m % M are one element longer."""
    q, r = divmod(m, M)
    out, start = [], 0
    for j in range(M):
        size = q + (1 if j < r else 0)
        out.append(list(range(start, start + size)))
        start += size
    return out


def encode_function(values: Sequence[int], k: int) -> int:
    """g: U_j -> {0..k} in sorted element order, as base-(k+1) digits (low first)."""
    code = 0
    for t, g in enumerate(values):
        code += g * (k + 1) ** t
    return code


def decode_function(code: int, length: int, k: int) -> list[int]:
    out = []
    for _ in range(length):
        code, digit = divmod(code, k + 1)
        out.append(digit)
    return out


@dataclass(frozen=True)
class VcspReductionArtifact:
    vcsp: ValuedTwoCsp
    c: Fraction
    M: int
    partition: tuple[tuple[int, ...], ...]
    x_alphabets: tuple[tuple[int, ...], ...]  # symbol a of x_i -> set index
    k: int

    def witness_assignment(self, chosen: Sequence[int]) -> tuple[int, ...]:
        """Assignment realising the coverage of ``chosen`` (one set index per x_i).

        An element covered by several chosen sets is credited to the smallest i.
        """
        if len(chosen) != self.k:
            raise ParameterError(f"need {self.k} sets, got {len(chosen)}")
        symbols = [self.x_alphabets[i].index(s) for i, s in enumerate(chosen)]
        assignment = list(symbols)
        for j, block in enumerate(self.partition):
            digits = []
            for t, _ in enumerate(block):
                label = 0
                for i in range(self.k):
                    if self._contains(i, symbols[i], j, t):
                        label = i + 1
                        break
                digits.append(label)
            assignment.append(encode_function(digits, self.k))
        return tuple(assignment)

    def _contains(self, i: int, a: int, j: int, t: int) -> bool:
        # element t of block j lies in the set of x_i=a iff the single-element
        # preimage {t} -> i scores positively
        code = (i + 1) * (self.k + 1) ** t
        edge = self.vcsp.edges[i * self.M + j]
        return edge.table[a][code] > 0


def cov_to_vcsp(ss: AnySetSystem, k: int, tau: Fraction) -> VcspReductionArtifact:
    tau = Fraction(tau)
    base = ss.base if isinstance(ss, ColoredSetSystem) else ss
    if k < 1:
        raise ParameterError(f"k={k} must be positive")
    if isinstance(ss, ColoredSetSystem):
        if ss.k != k:
            raise ParameterError(f"colored input has {ss.k} colors, k={k}")
        alphabets = [tuple(c) for c in ss.color_classes()]
    else:
        alphabets = [tuple(range(base.n_sets))] * k
    if base.n_sets < 2:
        raise ParameterError(f"need at least 2 sets, got {base.n_sets}")
    size = base.universe_size
    if size < 1:
        raise ParameterError("empty universe")
    M = block_count(size, k, base.n_sets)
    blocks = equal_blocks(size, M)
    masks = base.masks()

    variables = [(f"x{i + 1}", len(alphabets[i])) for i in range(k)]
    variables += [(f"y{j + 1}", (k + 1) ** len(b)) for j, b in enumerate(blocks)]

    # preimage[j][code][label] = bitmask (over the universe) of g^-1(label)
    preimages = []
    for b in blocks:
        per_code = []
        for code in range((k + 1) ** len(b)):
            digits = decode_function(code, len(b), k)
            pm = [0] * (k + 1)
            for t, g in enumerate(digits):
                pm[g] |= 1 << b[t]
            per_code.append(pm)
        preimages.append(per_code)

    edges = []
    for i in range(k):
        for j in range(M):
            table = []
            for set_idx in alphabets[i]:
                sm = masks[set_idx]
                row = []
                for pm in preimages[j]:
                    pre = pm[i + 1]
                    row.append(Fraction(pre.bit_count(), size) if pre & ~sm == 0 else Fraction(0))
                table.append(row)
            edges.append(VcspEdge(i, k + j, table))
    return VcspReductionArtifact(
        vcsp=ValuedTwoCsp(variables, edges),
        c=tau / (k * M),
        M=M,
        partition=tuple(tuple(b) for b in blocks),
        x_alphabets=tuple(alphabets),
        k=k,
    )


# --------------------------------------------------------------------------
# valued CSP -> weighted CSP

@dataclass(frozen=True)
class ThetaInstance:
    theta: tuple[int, ...]
    csp: WeightedTwoCsp
    source_edges: tuple[int, ...]  # csp edge r came from vcsp edge source_edges[r]


def _count_at_most(ell: int, B: int, limit: int) -> int:
    """#{theta in {0..B}^ell : sum theta <= limit}."""
    if limit < 0:
        return 0
    ways = [1] + [0] * limit
    for _ in range(ell):
        prefix = np.cumsum(np.array(ways, dtype=object))
        nxt = []
        for s in range(limit + 1):
            lo = s - B - 1
            nxt.append(prefix[s] - (prefix[lo] if lo >= 0 else 0))
        ways = nxt
    return int(sum(ways))


@dataclass
class ThetaStream:
    """Lazy stream of the thresholded 2-CSP instances.

    Decision rule: YES iff ``short_circuit`` or some emitted instance has
    weighted value >= 1 - eps.
    """

    vcsp: ValuedTwoCsp
    c: Fraction
    s: Fraction
    eps: Fraction
    gamma: Fraction
    B: int
    short_circuit: bool
    mean_threshold: Fraction  # (B/gamma) * s/(1-eps)
    _sorted_cells: list = field(default_factory=list, repr=False)

    @property
    def ell(self) -> int:
        return len(self.vcsp.edges)

    @property
    def sum_threshold(self) -> int:
        """Least integer theta-sum passing the filter."""
        return math.ceil(self.ell * self.mean_threshold)

    @property
    def weak_mean_threshold(self) -> Fraction:
        return self.B / self.gamma * self.s

    def passes(self, theta: Sequence[int]) -> bool:
        return Fraction(sum(theta), self.ell) >= self.mean_threshold

    def count(self, *, zero_allowed: bool = True) -> int:
        """Number of theta emitted (or, with zero_allowed=False, passing within [1..B]^ell)."""
        if self.short_circuit:
            return 0
        T, ell, B = self.sum_threshold, self.ell, self.B
        if zero_allowed:
            return (B + 1) ** ell - _count_at_most(ell, B, T - 1)
        # shift theta_e -> theta_e - 1 in {0..B-1}
        return B**ell - _count_at_most(ell, B - 1, T - 1 - ell)

    def thetas(self) -> Iterator[tuple[int, ...]]:
        """Passing theta in lexicographic order, each in O(ell) amortised."""
        if self.short_circuit:
            return
        ell, B, T = self.ell, self.B, self.sum_threshold
        theta = [0] * ell

        def rec(pos: int, partial: int):
            if pos == ell:
                yield tuple(theta)
                return
            rest = ell - pos - 1
            for t in range(max(0, T - partial - rest * B), B + 1):
                theta[pos] = t
                yield from rec(pos + 1, partial + t)

        yield from rec(0, 0)

    def instance(self, theta: Sequence[int]) -> ThetaInstance:
        edges, source = [], []
        for idx, (e, t) in enumerate(zip(self.vcsp.edges, theta)):
            if t == 0:
                continue  # C_e would be everything; weight 0 adds nothing
            bar = self.gamma * t / self.B
            allowed = frozenset(
                (a, b) for a, row in enumerate(e.table) for b, x in enumerate(row) if x >= bar
            )
            edges.append(CspEdge(e.u, e.v, t, allowed))
            source.append(idx)
        return ThetaInstance(tuple(theta), WeightedTwoCsp(self.vcsp.variables, edges), tuple(source))

    def __iter__(self) -> Iterator[ThetaInstance]:
        for theta in self.thetas():
            yield self.instance(theta)

    # exact decision helpers -------------------------------------------------

    def level_tables(self) -> list[tuple[int, int, list[list[int]]]]:
        """Per-edge tables of floor(B f_e / gamma), the largest theta_e an assignment meets."""
        out = []
        for e in self.vcsp.edges:
            out.append((e.u, e.v, [[min(self.B, math.floor(self.B * x / self.gamma)) for x in row] for row in e.table]))
        return out

    def theta_of(self, assignment: Sequence[int]) -> tuple[int, ...]:
        return tuple(
            min(self.B, math.floor(self.B * e.table[assignment[e.u]][assignment[e.v]] / self.gamma))
            for e in self.vcsp.edges
        )

    def best_level_sum(self, budget: int = DEFAULT_BUDGET) -> tuple[int, tuple[int, ...]]:
        """max over assignments psi of sum_e floor(B f_e(psi)/gamma), with a witness."""
        return maximize_edge_sum(self.vcsp.alphabet_sizes, self.level_tables(), budget)

    def has_satisfiable(self, budget: int = DEFAULT_BUDGET) -> bool:
        """Whether some emitted instance is fully satisfiable.

        An assignment psi satisfies instance theta iff theta <= theta_of(psi)
        coordinatewise, and theta_of(psi) is itself in the grid, so this holds
        iff max_psi sum(theta_of(psi)) reaches the filter.
        """
        if self.short_circuit:
            return True
        return self.best_level_sum(budget)[0] >= self.sum_threshold

    def value_upper_bound(self, budget: int = DEFAULT_BUDGET) -> Fraction:
        """Upper bound on the weighted value of every emitted instance.

        For theta and psi, satisfied weight <= sum(theta_of(psi)) and total
        weight >= sum_threshold.
        """
        best, _ = self.best_level_sum(budget)
        return min(Fraction(1), Fraction(best, self.sum_threshold))


def vcsp_to_csp(
    vcsp: ValuedTwoCsp, c: Fraction, s: Fraction, *, max_grid: int | None = None
) -> ThetaStream:
    c, s = Fraction(c), Fraction(s)
    if s <= 0:
        raise ParameterError(f"s={s} must be positive")
    if c <= s:
        raise ParameterError(f"need c > s, got c={c}, s={s}")
    ell = len(vcsp.edges)
    if ell < 1:
        raise ParameterError("valued CSP has no edges")
    ratio = c / s
    eps = (ratio - 1) / (ratio + 1)
    gamma = ell * s
    B = math.ceil(2 * ell / eps)
    if max_grid is not None and (B + 1) ** ell > max_grid:
        raise BudgetExceeded(f"theta grid (B+1)^l with B={B}, l={ell}", (B + 1) ** ell, max_grid)
    short = any(x >= gamma for e in vcsp.edges for row in e.table for x in row)
    return ThetaStream(
        vcsp=vcsp, c=c, s=s, eps=eps, gamma=gamma, B=B, short_circuit=short,
        mean_threshold=B / gamma * s / (1 - eps),
    )


# --------------------------------------------------------------------------
# composition

def pipeline_parameters(k: int, delta: Fraction, M: int) -> dict[str, Fraction]:
    delta = Fraction(delta)
    tau_prime = delta * (1 - delta) * (1 + delta**2)
    factor = 1 - delta**2 / 2
    c = tau_prime / (k * M)
    eps = delta**2 / (4 - delta**2)
    return {
        "tau_prime": tau_prime,
        "stage_gap_factor": factor,
        "c": c,
        "s": c * factor,
        "eps": eps,
        "final_soundness": 1 - eps,
        "theorem_soundness": 1 - delta**2 / 4,
    }


@dataclass
class PipelineResult:
    reduction: UniverseReduction
    artifact: VcspReductionArtifact
    stream: ThetaStream
    report: dict


def pipeline(
    ss: AnySetSystem,
    k: int,
    tau: Fraction,
    delta: Fraction,
    seed: int,
    m_override: int | None = None,
    reduce_universe: bool = True,
) -> PipelineResult:
    """With ``reduce_universe=False`` the random stage is skipped and the
    deterministic stages run on ``ss`` itself (p is reported as None)."""
    params = UniverseReductionParams(k, Fraction(tau), Fraction(delta), seed, m_override)
    if reduce_universe:
        red = universe_reduce(ss, params)
    else:
        red = UniverseReduction(ss, ss.universe_size, None)
    base = red.system.base if isinstance(red.system, ColoredSetSystem) else red.system
    M = block_count(base.universe_size, k, base.n_sets)
    prm = pipeline_parameters(k, params.delta, M)
    art = cov_to_vcsp(red.system, k, prm["tau_prime"])
    assert art.c == prm["c"]
    stream = vcsp_to_csp(art.vcsp, prm["c"], prm["s"])
    assert stream.eps == prm["eps"]
    report = {
        "k": k,
        "tau": params.tau,
        "delta": params.delta,
        "seed": seed,
        "m": red.m,
        "m_override": m_override,
        "reduce_universe": reduce_universe,
        "p": red.p,
        **prm,
        "M": M,
        "edges": stream.ell,
        "B": stream.B,
        "gamma": stream.gamma,
        "mean_threshold": stream.mean_threshold,
        "sum_threshold": stream.sum_threshold,
        "short_circuit": stream.short_circuit,
        "instance_count": stream.count(),
    }
    return PipelineResult(red, art, stream, report)
