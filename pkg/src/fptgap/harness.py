"""Instance generators, planted certificates and end-to-end gap certification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
from scipy.sparse.csgraph import floyd_warshall

from .errors import BudgetExceeded, ParameterError
from .instances import ColoredSetSystem, MaxCoverInstance, MetricInstance, SetSystem
from .oracles import (
    DEFAULT_BUDGET,
    chernoff_bound,
    coverage_count,
    coverage_fraction,
    maxcover_value,
    opt_kmaxcov,
    opt_kmedian,
    val_csp,
    val_vcsp,
)
from .reductions.clustering import (
    build_extended,
    guess_space,
    improv_coverage,
    kmedian_to_multicov,
    soundness_factor,
    weighted_to_unweighted,
)
from .reductions.csp import pipeline

# harness policy, not a property of the reductions
YES_PASS_RATE = Fraction(9, 10)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & (2**64 - 1)))


def jsonable(x: Any) -> Any:
    """Fractions become [num, den]; tuples become lists; recurses into containers."""
    if isinstance(x, Fraction):
        return [x.numerator, x.denominator]
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    return x


# --------------------------------------------------------------------------
# planted coverage instances

@dataclass(frozen=True)
class PlantedCertificate:
    kind: str  # "YES" | "NO"
    k: int
    tau: Fraction
    delta: Fraction
    value: Fraction  # coverage of the witness (YES) or the exact optimum (NO)
    witness: tuple[int, ...]
    attempts: int = 1

    def verify(self, ss, budget: int = DEFAULT_BUDGET) -> bool:
        if self.kind == "YES":
            return coverage_fraction(ss, self.witness) == self.value and self.value >= self.tau
        res = opt_kmaxcov(ss, None if isinstance(ss, ColoredSetSystem) else self.k, budget)
        return res.value == self.value and self.value < (1 - self.delta) * self.tau

    def to_dict(self) -> dict:
        return jsonable({
            "kind": self.kind, "k": self.k, "tau": self.tau, "delta": self.delta,
            "value": self.value, "witness": self.witness, "attempts": self.attempts,
        })


def gen_planted_cover(
    n_sets: int,
    universe_size: int,
    k: int,
    tau: Fraction,
    seed: int,
    kind: str = "YES",
    delta: Fraction = Fraction(1, 2),
    colored: bool = False,
    max_attempts: int = 10_000,
    budget: int = DEFAULT_BUDGET,
):
    """Returns ``(system, certificate)``.

    YES: k planted sets whose union has exactly ceil(tau*m) elements; padding
    sets are random subsets of that union, so the optimum is exactly the
    planted coverage.  NO: random sparse systems, rejected until the exact
    optimum is below (1-delta)*tau.
    """
    tau, delta = Fraction(tau), Fraction(delta)
    m = universe_size
    if not 1 <= k <= n_sets:
        raise ParameterError(f"k={k} out of range [1,{n_sets}]")
    if m < 1 or not 0 < tau <= 1:
        raise ParameterError("need m >= 1 and tau in (0,1]")
    rng = _rng(seed)
    kind = kind.upper()
    if kind == "YES":
        target = math.ceil(tau * m)
        union = sorted(int(x) for x in rng.choice(m, size=target, replace=False))
        owner = rng.integers(0, k, size=target)
        # every planted set gets at least one element when possible
        for i in range(min(k, target)):
            owner[i] = i
        rng.shuffle(owner)
        planted_sets = [[u for u, o in zip(union, owner) if o == i] for i in range(k)]
        slots = sorted(int(x) for x in rng.choice(n_sets, size=k, replace=False))
        sets: list[list[int]] = [[] for _ in range(n_sets)]
        for slot, s in zip(slots, planted_sets):
            sets[slot] = s
        for idx in range(n_sets):
            if idx not in slots:
                keep = rng.random(target) < 0.5
                sets[idx] = [u for u, kp in zip(union, keep) if kp]
        system = _wrap(m, sets, slots, k, colored, rng)
        cert = PlantedCertificate("YES", k, tau, delta, coverage_fraction(system, slots), tuple(slots))
        return system, cert
    if kind != "NO":
        raise ParameterError(f"kind must be YES or NO, got {kind!r}")
    bound = (1 - delta) * tau
    q = float(bound) / k
    for attempt in range(1, max_attempts + 1):
        sets = [[u for u in range(m) if rng.random() < q] for _ in range(n_sets)]
        slots = sorted(int(x) for x in rng.choice(n_sets, size=k, replace=False))
        system = _wrap(m, sets, slots, k, colored, rng)
        res = opt_kmaxcov(system, None if colored else k, budget)
        if res.value < bound:
            return system, PlantedCertificate("NO", k, tau, delta, res.value, res.witness, attempt)
    raise BudgetExceeded("NO-sampling attempts", max_attempts, max_attempts)


def _wrap(m: int, sets, slots, k: int, colored: bool, rng):
    ss = SetSystem(m, [sorted(s) for s in sets])
    if not colored:
        return ss
    colors = [int(c) for c in rng.integers(0, k, size=len(sets))]
    for i, idx in enumerate(slots):
        colors[idx] = i
    return ColoredSetSystem(ss, colors, k)


def random_set_system(m: int, n_sets: int, rng, density: float = 0.4) -> SetSystem:
    return SetSystem(m, [[u for u in range(m) if rng.random() < density] for _ in range(n_sets)])


# --------------------------------------------------------------------------
# metrics and MaxCover

def _pick(n: int, count: int | None, rng) -> list[int]:
    if count is None:
        count = max(1, n // 2)
    if not 1 <= count <= n:
        raise ParameterError(f"cannot pick {count} of {n} points")
    return sorted(int(x) for x in rng.choice(n, size=count, replace=False))


def gen_metric(
    n: int,
    shape: str = "random",
    d_max: int = 10,
    seed: int = 0,
    *,
    positions: Sequence[int] | None = None,
    clients: Sequence[int] | None = None,
    facilities: Sequence[int] | None = None,
    n_clients: int | None = None,
    n_facilities: int | None = None,
    density: float = 0.5,
) -> MetricInstance:
    if n < 1:
        raise ParameterError("need n >= 1")
    if d_max < 1:
        raise ParameterError("need d_max >= 1")
    rng = _rng(seed)
    if shape == "line":
        if positions is None:
            positions = sorted(int(x) for x in rng.choice(d_max + 1, size=n, replace=n > d_max + 1))
        if len(positions) != n:
            raise ParameterError("positions must have n entries")
        p = np.array(positions, dtype=np.int64)
        d = np.abs(p[:, None] - p[None, :])
    elif shape == "grid":
        side = math.ceil(math.sqrt(n))
        scale = max(1, d_max // max(1, 2 * (side - 1)))
        xy = np.array([(i // side, i % side) for i in range(n)], dtype=np.int64)
        d = scale * np.abs(xy[:, None, :] - xy[None, :, :]).sum(axis=2)
    elif shape == "random":
        w = rng.integers(1, d_max + 1, size=(n, n))
        w = np.triu(w, 1)
        mask = np.triu(rng.random((n, n)) < density, 1)
        mask[np.arange(n - 1), np.arange(1, n)] = True  # a path keeps it connected
        g = np.where(mask, w, 0)
        g = g + g.T
        d = floyd_warshall(g, directed=False).astype(np.int64)
    else:
        raise ParameterError(f"unknown shape {shape!r}")
    C = sorted(clients) if clients is not None else _pick(n, n_clients, rng)
    F = sorted(facilities) if facilities is not None else _pick(n, n_facilities, rng)
    return MetricInstance(n, d.tolist(), C, F)


def gen_maxcover(
    k: int,
    ell: int,
    left_sizes: Sequence[int],
    right_sizes: Sequence[int],
    density: float,
    seed: int,
    planted: bool = False,
) -> MaxCoverInstance:
    """Left vertices are numbered first, then right ones."""
    if len(left_sizes) != k or len(right_sizes) != ell:
        raise ParameterError("group size lists must have k and l entries")
    if min(left_sizes) < 1 or min(right_sizes) < 1:
        raise ParameterError("groups must be non-empty")
    rng = _rng(seed)
    left, nxt = [], 0
    for s in left_sizes:
        left.append(list(range(nxt, nxt + s)))
        nxt += s
    right = []
    for s in right_sizes:
        right.append(list(range(nxt, nxt + s)))
        nxt += s
    edges = {
        (v, w) for g in left for v in g for h in right for w in h if rng.random() < density
    }
    if planted:
        labeling = [int(rng.choice(g)) for g in left]
        for h in right:
            w = int(rng.choice(h))
            edges.update((v, w) for v in labeling)
    return MaxCoverInstance(left, right, edges)


def gen_maxcover_sound(
    k: int,
    ell: int,
    left_sizes: Sequence[int],
    right_sizes: Sequence[int],
    density: float,
    seed: int,
    max_attempts: int = 1000,
) -> tuple[MaxCoverInstance, Fraction, int]:
    """Rejection-sample until the MaxCover value is at most 1/2."""
    for attempt in range(max_attempts):
        inst = gen_maxcover(k, ell, left_sizes, right_sizes, density, seed + attempt)
        v = maxcover_value(inst).value
        if v <= Fraction(1, 2):
            return inst, v, attempt + 1
    raise BudgetExceeded("MaxCover soundness sampling attempts", max_attempts, max_attempts)


# --------------------------------------------------------------------------
# reports

@dataclass
class GapReport:
    kind: str
    parameters: dict
    records: list[dict] = field(default_factory=list)
    verdicts: dict[str, bool] = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.verdicts.values())

    def recompute_verdicts(self) -> dict[str, bool]:
        if self.kind == "pipeline":
            return _pipeline_verdicts(self.parameters, self.records)
        if self.kind == "kmedian":
            return _kmedian_verdicts(self.parameters, self.records)
        raise ParameterError(f"unknown report kind {self.kind!r}")

    def to_dict(self) -> dict:
        return jsonable({
            "kind": self.kind,
            "parameters": self.parameters,
            "records": self.records,
            "verdicts": self.verdicts,
            "statistics": self.statistics,
            "notes": self.notes,
        })


def _trial_passed(direction: str, rec: dict, final_soundness: Fraction) -> bool:
    if "refused" in rec:
        return False
    if direction == "YES":
        return rec["short_circuit"] or rec["best_level_sum"] >= rec["sum_threshold"]
    return rec["value_bound"] <= final_soundness


def _pipeline_verdicts(params: dict, records: list[dict]) -> dict[str, bool]:
    direction = params["direction"]
    fs = params["final_soundness"]
    passed = [_trial_passed(direction, r, fs) for r in records]
    held = [r.get("sub_gap_held", False) for r in records]
    v = {
        # deterministic stages: whenever the random stage kept its gap the rest must follow
        "deterministic_stages": all(p for p, h in zip(passed, held) if h),
        "value_identity": all(r.get("identity_holds", True) for r in records),
    }
    if direction == "YES":
        v["completeness_rate"] = bool(records) and Fraction(sum(passed), len(records)) >= YES_PASS_RATE
    else:
        v["soundness"] = v["deterministic_stages"]
    return v


def certify_pipeline(
    ss,
    cert: PlantedCertificate,
    k: int,
    tau: Fraction,
    delta: Fraction,
    seed: int,
    m_override: int | None,
    trials: int,
    budget: int = DEFAULT_BUDGET,
    exact_limit: int = 2000,
    reduce_universe: bool = True,
) -> GapReport:
    """Run the composed reduction ``trials`` times (trial t uses seed + t).

    ``reduce_universe=False`` skips the random stage, leaving only the
    deterministic ones, whose verdicts must then agree across trials.
    """
    tau, delta = Fraction(tau), Fraction(delta)
    if cert.k != k or cert.tau != tau:
        raise ParameterError("certificate parameters do not match the request")
    if not cert.verify(ss, budget):
        raise ParameterError("certificate does not re-verify on this instance")
    direction = cert.kind
    records: list[dict] = []
    params: dict = {}
    for t in range(trials):
        tseed = seed + t
        rec: dict = {"trial": t, "seed": tseed}
        records.append(rec)
        try:
            res = pipeline(ss, k, tau, delta, tseed, m_override, reduce_universe)
        except (BudgetExceeded, ParameterError) as exc:
            rec["refused"] = str(exc)
            continue
        rep = res.report
        if not params:
            params = {key: rep[key] for key in (
                "k", "tau", "delta", "m", "m_override", "reduce_universe", "p", "tau_prime", "stage_gap_factor",
                "c", "s", "eps", "final_soundness", "theorem_soundness", "M", "edges", "B",
                "gamma", "mean_threshold", "sum_threshold", "instance_count")}
        reduced = res.reduction.system
        try:
            opt = opt_kmaxcov(reduced, None if isinstance(reduced, ColoredSetSystem) else k, budget)
            rec["reduced_opt"] = opt.value
            if direction == "YES":
                rec["sub_gap_held"] = opt.value >= rep["tau_prime"]
            else:
                rec["sub_gap_held"] = opt.value < rep["stage_gap_factor"] * rep["tau_prime"]
            val = val_vcsp(res.artifact.vcsp, budget).value
            rec["val_vcsp"] = val
            rec["identity_holds"] = val == opt.value / (k * res.artifact.M)
            rec["short_circuit"] = res.stream.short_circuit
            rec["sum_threshold"] = res.stream.sum_threshold
            rec["instance_count"] = rep["instance_count"]
            if res.stream.short_circuit:
                rec["best_level_sum"] = None
                rec["value_bound"] = Fraction(1)
                continue
            best, _ = res.stream.best_level_sum(budget)
            rec["best_level_sum"] = best
            bound = min(Fraction(1), Fraction(best, res.stream.sum_threshold))
            rec["value_bound"], rec["bound_method"] = bound, "level-sum"
            if direction == "NO" and bound > rep["final_soundness"] and rep["instance_count"] <= exact_limit:
                rec["value_bound"] = max(
                    (val_csp(inst.csp, budget).value for inst in res.stream if inst.csp.edges),
                    default=Fraction(0),
                )
                rec["bound_method"] = "exhaustive"
        except BudgetExceeded as exc:
            rec["refused"] = str(exc)
    fs = params.get("final_soundness", 1 - delta**2 / (4 - delta**2))
    params.update(direction=direction, final_soundness=fs, trials=trials, base_seed=seed,
                  certificate=cert.to_dict())
    report = GapReport("pipeline", params, records)
    report.verdicts = report.recompute_verdicts()
    passed = sum(_trial_passed(direction, r, fs) for r in records)
    held = sum(bool(r.get("sub_gap_held")) for r in records)
    stats = {
        "successes": passed,
        "trials": trials,
        "empirical_failure_rate": Fraction(trials - passed, trials) if trials else None,
        "sub_gap_held": held,
        "refused": sum("refused" in r for r in records),
        "pass_rate_policy": YES_PASS_RATE,
    }
    if params.get("p") is not None and direction == "YES":
        # chance that a fixed new element is hit by the planted union, per draw
        q = 1 - (1 - params["p"]) ** math.ceil(tau * ss.universe_size)
        zeta = 1 - params["tau_prime"] / q if q > params["tau_prime"] else None
        if zeta is not None and 0 < zeta < 1:
            stats["chernoff_annotation"] = chernoff_bound(zeta, q, params["m"])
    report.statistics = stats
    report.notes.append("pass-rate threshold is harness policy")
    if direction == "NO":
        report.notes.append("NO instances come from oracle rejection sampling, which favours easy instances")
    return report


def _kmedian_verdicts(params: dict, records: list[dict]) -> dict[str, bool]:
    opt, tau = params["opt"], params["tau"]
    v: dict[str, bool] = {}
    emitted = [r for r in records if r.get("emitted")]
    if opt <= tau:
        v["completeness"] = any(r["colored_opt"] >= r["threshold"] for r in emitted)
    if opt >= params["soundness_cost"]:
        f = params["soundness_factor"]
        v["soundness"] = all(r["colored_opt"] <= f * r["threshold"] for r in emitted)
    v["end_to_end_min"] = params["min_residual"] == opt
    return v


def certify_kmedian(
    metric: MetricInstance,
    k: int,
    tau: int,
    alpha: Fraction,
    delta: Fraction,
    squared: bool = False,
    radius_mode: str = "exact",
    budget: int = DEFAULT_BUDGET,
    universe_cap: int = 10**6,
) -> GapReport:
    alpha, delta = Fraction(alpha), Fraction(delta)
    opt = opt_kmedian(metric, k, squared, budget)
    red_report: dict = {}
    records: list[dict] = []
    for inst in kmedian_to_multicov(metric, k, tau, alpha, delta, squared, radius_mode, universe_cap, red_report):
        res = opt_kmaxcov(inst.system, None, budget)
        count = coverage_count(inst.system, res.witness)
        records.append({
            "leaders": list(inst.guess.leaders),
            "radii": list(inst.guess.radii),
            "baseline_cost": inst.baseline_cost,
            "universe_size": inst.system.universe_size,
            "threshold": inst.threshold,
            "colored_opt": count,
            "witness": list(res.witness),
            "emitted": True,
        })
    # the unfiltered minimum residual over all guesses equals OPT
    all_min = _min_residual_all_guesses(metric, k, squared, radius_mode, alpha, delta, budget, universe_cap)
    params = {
        "k": k, "tau": tau, "alpha": alpha, "delta": delta, "squared": squared,
        "radius_mode": radius_mode, "opt": opt.value, "opt_witness": list(opt.witness),
        "soundness_cost": (1 + alpha + delta) * tau,
        "soundness_factor": soundness_factor(alpha, squared),
        "baseline_limit": red_report["baseline_limit"],
        "guess_count": len(red_report["guesses"]),
        "emitted_count": len(records),
        "min_residual": all_min,
    }
    report = GapReport("kmedian", params, records)
    report.verdicts = report.recompute_verdicts()
    witness = [r for r in records if r["colored_opt"] >= r["threshold"]]
    if opt.value <= tau and witness:
        report.statistics["witness_guess"] = {"leaders": witness[0]["leaders"], "radii": witness[0]["radii"]}
    if tau < opt.value < (1 + alpha + delta) * tau:
        report.notes.append("OPT lies inside the gap; neither direction is asserted")
    return report


def _min_residual_all_guesses(metric, k, squared, radius_mode, alpha, delta, budget, cap) -> int:
    """min over every guess (no baseline filter) of cost(C,F') - best colored coverage."""
    eps = (8 if squared else 2) * Fraction(delta) / Fraction(alpha)
    best = None
    for g in guess_space(metric, k, radius_mode, eps if radius_mode == "geometric" else None):
        try:
            ext = build_extended(metric, g)
        except ParameterError:
            continue
        cov = improv_coverage(ext, squared)
        system = weighted_to_unweighted(cov.wss, cap)
        res = opt_kmaxcov(system, None, budget)
        r = cov.baseline_cost - coverage_count(system, res.witness)
        best = r if best is None else min(best, r)
    return best
