"""k-median / k-means -> multicolored k-MaxCoverage.

For every guess of leaders and radii the metric is extended with fictitious
facilities ``f'_i`` (pendant points at distance ``R_i`` from ``l_i``), and the
improvement function ``improv(S) = cost(C, F') - cost(C, S + F')`` is laid out
as a weighted coverage function: each client ``c`` gets a chain of elements,
one per facility strictly closer than ``d(c, F')``, and a facility's set
holds the prefix of the chain down to its own distance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterator, Sequence

import numpy as np

from ..errors import BudgetExceeded, ParameterError
from ..instances import ColoredSetSystem, MetricInstance, SetSystem, WeightedSetSystem
from ..oracles import kmedian_cost

DEFAULT_UNIVERSE_CAP = 10**6


@dataclass(frozen=True)
class Guess:
    leaders: tuple[int, ...]
    radii: tuple[int, ...]

    def balls(self, metric: MetricInstance) -> list[list[int]]:
        """F_i = facilities within R_i of leader i."""
        return [
            [f for f in metric.facilities if metric.d(f, l) <= r]
            for l, r in zip(self.leaders, self.radii)
        ]


def radius_grid(metric: MetricInstance, leader: int, mode: str, eps: Fraction | None) -> list[int]:
    dists = sorted({metric.d(leader, f) for f in metric.facilities})
    if mode == "exact":
        return dists
    if mode != "geometric":
        raise ParameterError(f"unknown radius mode {mode!r}")
    if eps is None or eps <= 0:
        raise ParameterError("geometric mode needs eps > 0")
    positive = [x for row in metric.dist for x in row if x > 0]
    if not positive:
        raise ParameterError("degenerate metric")
    d_min, d_max = min(positive), max(positive)
    grid = {0} if dists[0] == 0 else set()
    r = Fraction(d_min)
    while r <= d_max:
        grid.add(math.floor(r))
        r *= 1 + eps
    grid.add(d_max)
    return sorted(grid)


def guess_space(
    metric: MetricInstance, k: int, mode: str = "exact", eps: Fraction | None = None
) -> Iterator[Guess]:
    """Leaders over C^k and radii per leader, in lexicographic order."""
    if not metric.clients:
        raise ParameterError("no clients")
    if not 1 <= k <= len(metric.facilities):
        raise ParameterError(f"k={k} out of range [1,{len(metric.facilities)}]")
    grids = {l: radius_grid(metric, l, mode, eps) for l in metric.clients}
    for leaders in product(sorted(metric.clients), repeat=k):
        for radii in product(*(grids[l] for l in leaders)):
            yield Guess(leaders, radii)


def guess_count(metric: MetricInstance, k: int, mode: str = "exact", eps: Fraction | None = None) -> int:
    sizes = [len(radius_grid(metric, l, mode, eps)) for l in sorted(metric.clients)]
    return sum(sizes) ** k


@dataclass(frozen=True)
class ExtendedMetric:
    base: MetricInstance
    guess: Guess
    metric: MetricInstance  # points: base, then f'_1..f'_k, then facility copies
    fictitious: tuple[int, ...]
    facility_copies: tuple[tuple[int, int, int], ...]  # (point, original facility, color)

    def copies_of_color(self, i: int) -> list[int]:
        return [p for p, _, c in self.facility_copies if c == i]

    def original(self, point: int) -> int:
        for p, f, _ in self.facility_copies:
            if p == point:
                return f
        return point


def build_extended(metric: MetricInstance, guess: Guess) -> ExtendedMetric:
    k = len(guess.leaders)
    if len(guess.radii) != k:
        raise ParameterError("leaders and radii differ in length")
    for l in guess.leaders:
        if l not in metric.clients:
            raise ParameterError(f"leader {l} is not a client")
    balls = guess.balls(metric)
    for i, b in enumerate(balls):
        if not b:
            raise ParameterError(f"guess rejected: F_{i + 1} is empty (leader {guess.leaders[i]}, R={guess.radii[i]})")
    n = metric.n
    base = metric.as_array()
    copies = [(f, i) for i, b in enumerate(balls) for f in b]
    N = n + k + len(copies)
    d = np.zeros((N, N), dtype=np.int64)
    d[:n, :n] = base
    R = np.array(guess.radii, dtype=np.int64)
    L = list(guess.leaders)
    to_fict = R[None, :] + base[:, L]  # [x, i] = R_i + d(l_i, x)
    d[:n, n:n + k] = to_fict
    d[n:n + k, :n] = to_fict.T
    fict = R[:, None] + base[np.ix_(L, L)] + R[None, :]
    np.fill_diagonal(fict, 0)
    d[n:n + k, n:n + k] = fict
    if copies:
        src = np.array([f for f, _ in copies], dtype=np.int64)
        # a copy sits exactly where its original sits
        d[n + k:, :n + k] = d[src, :n + k]
        d[:n + k, n + k:] = d[:n + k, src]
        d[n + k:, n + k:] = base[np.ix_(src, src)]
    copy_points = tuple(range(n + k, N))
    ext = MetricInstance(
        N,
        d.tolist(),
        metric.clients,
        tuple(sorted(set(metric.facilities) | set(copy_points))),
    )
    return ExtendedMetric(
        base=metric,
        guess=guess,
        metric=ext,
        fictitious=tuple(range(n, n + k)),
        facility_copies=tuple((p, f, i) for p, (f, i) in zip(copy_points, copies)),
    )


def improv_eval(ext: ExtendedMetric, S: Sequence[int], squared: bool = False) -> int:
    """cost(C, F') - cost(C, S + F') in the extended metric."""
    real = set(ext.metric.facilities)
    for f in S:
        if f not in real:
            raise ParameterError(f"{f} is not a real facility of the extension")
    fict = list(ext.fictitious)
    return kmedian_cost(ext.metric, fict, squared) - kmedian_cost(ext.metric, fict + list(S), squared)


@dataclass(frozen=True)
class ImprovCoverage:
    """``wss`` has one colored set per facility copy; ``facility_sets`` maps every
    original facility to its element list."""

    wss: WeightedSetSystem
    element_origin: tuple[tuple[int, int], ...]  # element -> (client, rank in F_c, 1-based)
    facility_sets: dict
    baseline_cost: int
    squared: bool

    def weight_of(self, facilities: Sequence[int]) -> int:
        covered = set()
        for f in facilities:
            covered.update(self.facility_sets[f])
        return sum(self.wss.element_weight[e] for e in covered)


def improv_coverage(ext: ExtendedMetric, squared: bool = False) -> ImprovCoverage:
    d = ext.metric.as_array()
    fict = list(ext.fictitious)
    facilities = sorted(ext.base.facilities)
    weights: list[int] = []
    origin: list[tuple[int, int]] = []
    sets: dict[int, list[int]] = {f: [] for f in facilities}
    baseline = 0
    for c in ext.base.clients:
        dc = int(d[c, fict].min())
        cost = (lambda x: x * x) if squared else (lambda x: x)
        baseline += cost(dc)
        closer = [f for f in facilities if d[f, c] < dc]
        # decreasing distance, ties by facility index
        closer.sort(key=lambda f: (-int(d[f, c]), f))
        prev = cost(dc)
        chain: list[int] = []  # element ids created so far for this client
        for rank, f in enumerate(closer, start=1):
            here = cost(int(d[f, c]))
            if prev - here > 0:
                chain.append(len(weights))
                weights.append(prev - here)
                origin.append((c, rank))
            prev = here
            sets[f].extend(chain)
    m = len(weights)
    colored_sets, colors = [], []
    for p, f, i in ext.facility_copies:
        colored_sets.append(sorted(sets[f]))
        colors.append(i)
    k = len(ext.fictitious)
    base = ColoredSetSystem(SetSystem(m, colored_sets), colors, k)
    return ImprovCoverage(
        wss=WeightedSetSystem(base, weights),
        element_origin=tuple(origin),
        facility_sets={f: tuple(sorted(s)) for f, s in sets.items()},
        baseline_cost=baseline,
        squared=squared,
    )


def weighted_to_unweighted(wss: WeightedSetSystem, cap: int = DEFAULT_UNIVERSE_CAP):
    """Replace an element of weight w by w unit copies in the same sets."""
    total = sum(wss.element_weight)
    if total > cap:
        raise BudgetExceeded("total element weight", total, cap)
    start, acc = [], 0
    for w in wss.element_weight:
        start.append(acc)
        acc += w
    base = wss.base.base if isinstance(wss.base, ColoredSetSystem) else wss.base
    new_sets = []
    for s in base.sets:
        out = []
        for e in s:
            out.extend(range(start[e], start[e] + wss.element_weight[e]))
        new_sets.append(out)
    plain = SetSystem(total, new_sets)
    if isinstance(wss.base, ColoredSetSystem):
        return ColoredSetSystem(plain, wss.base.color_of, wss.base.k)
    return plain


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageInstance:
    guess: Guess
    system: ColoredSetSystem
    threshold: int  # coverage needed for cost <= tau
    baseline_cost: int
    ext: ExtendedMetric
    coverage: ImprovCoverage


def soundness_factor(alpha: Fraction, squared: bool) -> Fraction:
    return 1 - Fraction(alpha) / (8 if squared else 2)


def baseline_limit(tau: int, alpha: Fraction, delta: Fraction, squared: bool) -> Fraction:
    """Largest cost(C, F') a guess may have and still be emitted: (3+eps)*tau with
    eps = 2*delta/alpha, or (9+eps)*tau with eps = 8*delta/alpha for k-means."""
    alpha, delta = Fraction(alpha), Fraction(delta)
    if squared:
        return (9 + 8 * delta / alpha) * tau
    return (3 + 2 * delta / alpha) * tau


def kmedian_to_multicov(
    metric: MetricInstance,
    k: int,
    tau: int,
    alpha: Fraction,
    delta: Fraction,
    squared: bool = False,
    radius_mode: str = "exact",
    universe_cap: int = DEFAULT_UNIVERSE_CAP,
    report: dict | None = None,
) -> Iterator[CoverageInstance]:
    """One multicolored coverage instance per admissible guess.

    ``report`` (if given) is filled with parameters and one row per guess,
    including skipped ones.
    """
    alpha, delta = Fraction(alpha), Fraction(delta)
    if alpha <= 0 or delta <= 0:
        raise ParameterError("alpha and delta must be positive")
    eps = (8 if squared else 2) * delta / alpha
    limit = baseline_limit(tau, alpha, delta, squared)
    rows: list[dict] = []
    if report is not None:
        report.update(
            k=k, tau=tau, alpha=alpha, delta=delta, squared=squared, radius_mode=radius_mode,
            eps=eps, baseline_limit=limit, soundness_factor=soundness_factor(alpha, squared),
            guesses=rows,
        )
    for g in guess_space(metric, k, radius_mode, eps if radius_mode == "geometric" else None):
        row = {"leaders": list(g.leaders), "radii": list(g.radii)}
        rows.append(row)
        try:
            ext = build_extended(metric, g)
        except ParameterError as exc:
            row["skipped"] = str(exc)
            continue
        cov = improv_coverage(ext, squared)
        row["baseline_cost"] = cov.baseline_cost
        if cov.baseline_cost > limit:
            row["skipped"] = f"baseline cost {cov.baseline_cost} > {limit}"
            continue
        system = weighted_to_unweighted(cov.wss, universe_cap)
        threshold = cov.baseline_cost - tau
        row.update(universe_size=system.universe_size, threshold=threshold, emitted=True)
        yield CoverageInstance(g, system, threshold, cov.baseline_cost, ext, cov)
