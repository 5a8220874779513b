"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Sizes follow the stated criteria; everything is exact (Fraction / int).
"""
import subprocess
import sys
from fractions import Fraction
from itertools import chain, combinations, product
from math import comb

import numpy as np
import pytest

from fptgap.harness import (
    certify_kmedian,
    certify_pipeline,
    gen_maxcover,
    gen_maxcover_sound,
    gen_metric,
    gen_planted_cover,
    random_set_system,
)
from fptgap.instances import (
    ColoredSetSystem,
    ValuedTwoCsp,
    VcspEdge,
    deserialize,
    serialize,
)
from fptgap.oracles import greedy_kmaxcov, maxcover_value, opt_kmaxcov, opt_kmedian, val_csp, val_vcsp
from fptgap.reductions.clustering import build_extended, guess_space, improv_coverage, improv_eval, kmedian_to_multicov
from fptgap.reductions.csp import cov_to_vcsp, vcsp_to_csp
from fptgap.reductions.maxcover import deficiency_bound, maxcover_to_kmaxcov, min_deficiency, soundness_deficiency
from csp_oracle import emitted_max_values

H = Fraction(1, 2)
GREEDY_RATIO = Fraction(79, 125)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n} {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def small_systems(count, seed):
    """Uncolored and colored systems with m <= 10, at most 6 sets, k <= 3."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    while len(out) < count:
        m = int(rng.integers(1, 11))
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, min(3, n) + 1))
        ss = random_set_system(m, n, rng, density=float(rng.uniform(0.1, 0.6)))
        if len(out) % 2:
            colors = list(range(k)) + [int(c) for c in rng.integers(0, k, size=n - k)]
            rng.shuffle(colors)
            out.append((ColoredSetSystem(ss, colors, k), k))
        else:
            out.append((ss, k))
    return out


# 1 -------------------------------------------------------------------------

def test_criterion_1_value_identity(report):
    cases = small_systems(240, seed=1)
    bad = []
    for ss, k in cases:
        art = cov_to_vcsp(ss, k, Fraction(1))
        opt = opt_kmaxcov(ss, None if isinstance(ss, ColoredSetSystem) else k).value
        if val_vcsp(art.vcsp).value != opt / (k * art.M):
            bad.append(ss)
    colored = sum(isinstance(s, ColoredSetSystem) for s, _ in cases)
    ok = not bad
    report(1, ok, f"val = OPT/(kM) exactly on {len(cases)} systems ({colored} colored), {len(bad)} mismatches")
    assert ok


# 2 -------------------------------------------------------------------------

def random_vcsp(rng):
    nv = int(rng.integers(2, 4))
    sizes = [int(rng.integers(1, 4)) for _ in range(nv)]
    pairs = [(u, v) for u in range(nv) for v in range(u + 1, nv)]
    ell = int(rng.integers(1, min(3, len(pairs)) + 1))
    chosen = [pairs[i] for i in rng.choice(len(pairs), size=ell, replace=False)]
    edges = [
        VcspEdge(u, v, [[Fraction(int(rng.integers(0, 7)), 6) for _ in range(sizes[v])] for _ in range(sizes[u])])
        for u, v in chosen
    ]
    return ValuedTwoCsp([(f"v{i}", s) for i, s in enumerate(sizes)], edges)


def test_criterion_2_theta_reduction(report):
    rng = np.random.Generator(np.random.PCG64(2))
    checked = complete_cases = sound_cases = short = 0
    failures = []
    while checked < 120:
        p = random_vcsp(rng)
        v = val_vcsp(p).value
        if v == 0:
            continue
        ratio = [Fraction(3, 2), Fraction(2)][checked % 2]
        # alternate between c <= val (completeness side) and c above val
        c = v if checked % 4 < 2 else min(Fraction(1), v * Fraction(5, 4))
        if c == v and checked % 4 >= 2:
            c = v + Fraction(1, 12)
        s = c / ratio
        stream = vcsp_to_csp(p, c, s)
        thetas, best = emitted_max_values(stream)
        checked += 1
        short += stream.short_circuit
        if v >= c:
            complete_cases += 1
            if not (stream.short_circuit or any(b == 1 for b in best)):
                failures.append(("completeness", p, c, s))
        if not stream.short_circuit and any(b >= 1 - stream.eps for b in best):
            sound_cases += 1
            if not v >= s:
                failures.append(("soundness", p, c, s))
        # spot-check the independent evaluator against the library solver
        for th, b in list(zip(thetas, best))[:: max(1, len(best) // 4)]:
            if val_csp(stream.instance(tuple(int(x) for x in th)).csp).value != b:
                failures.append(("solver", p, c, s))
    half = ValuedTwoCsp([("a", 1), ("b", 1), ("c", 1)], [VcspEdge(0, 1, [[0]]), VcspEdge(1, 2, [[0]])])
    st28 = vcsp_to_csp(half, H, Fraction(1, 4))
    grid = [th for th in product(range(1, 13), repeat=2) if st28.passes(th)]
    counts_ok = st28.B == 12 and len(grid) == 28 and st28.count() == 28
    ok = not failures and counts_ok
    report(2, ok, f"{checked} valued CSPs ({complete_cases} completeness, {sound_cases} soundness premises, "
                  f"{short} short-circuit), B=12 with {len(grid)}/144 passing; {len(failures)} failures")
    assert ok, failures[:3]


# 3 -------------------------------------------------------------------------

def test_criterion_3_pipeline(report):
    lines, ok = [], True
    for seed in (11, 12, 13):
        ss, cert = gen_planted_cover(4, 6, 2, Fraction(1), seed)
        rep = certify_pipeline(ss, cert, 2, Fraction(1), H, seed=1000 * seed, m_override=64, trials=50)
        rate = Fraction(rep.statistics["successes"], 50)
        ok &= rate >= Fraction(9, 10) and rep.verdicts["deterministic_stages"]
        lines.append(f"YES seed {seed}: {rep.statistics['successes']}/50")
    for seed in (21, 22, 23):
        ss, cert = gen_planted_cover(4, 6, 2, Fraction(1), seed, kind="NO")
        rep = certify_pipeline(ss, cert, 2, Fraction(1), H, seed=1000 * seed, m_override=64, trials=50)
        held = [r for r in rep.records if r.get("sub_gap_held")]
        good = all(r["value_bound"] <= Fraction(14, 15) for r in held)
        ok &= good
        lines.append(f"NO seed {seed}: {sum(r['value_bound'] <= Fraction(14, 15) for r in held)}/{len(held)} below 14/15")
    report(3, ok, "; ".join(lines))
    assert ok


# 4 -------------------------------------------------------------------------

def test_criterion_4_coverage_identity(report):
    rng = np.random.Generator(np.random.PCG64(4))
    metrics_done = checks = 0
    bad = 0
    while metrics_done < 100:
        n = int(rng.integers(2, 13))
        nf = int(rng.integers(1, min(n, 12) + 1))
        nc = int(rng.integers(1, min(n, 4) + 1))
        shape = ["line", "grid", "random"][metrics_done % 3]
        metric = gen_metric(n, shape, int(rng.integers(1, 12)), int(rng.integers(0, 2**32)),
                            n_clients=nc, n_facilities=nf)
        k = 1 if nf > 6 or metrics_done % 2 else min(2, nf)
        subsets = list(chain.from_iterable(combinations(metric.facilities, r) for r in range(nf + 1)))
        for g in guess_space(metric, k):
            ext = build_extended(metric, g)
            for squared in (False, True):
                cov = improv_coverage(ext, squared)
                for S in subsets:
                    checks += 1
                    if cov.weight_of(S) != improv_eval(ext, S, squared):
                        bad += 1
        metrics_done += 1
    ok = bad == 0
    report(4, ok, f"{metrics_done} metrics, {checks} (guess, F, cost) identities checked, {bad} mismatches")
    assert ok


# 5 -------------------------------------------------------------------------

def test_criterion_5_kmedian_end_to_end(report):
    rng = np.random.Generator(np.random.PCG64(5))
    configs = [(1, 10, 4)] * 8 + [(2, 6, 3)] * 8 + [(3, 4, 2)] * 6  # (k, |F|, |C|)
    alpha, delta = H, H
    done = {"completeness": 0, "soundness": 0}
    failures = []
    for idx, (k, nf, nc) in enumerate(configs):
        n = nf + nc if idx % 2 else max(nf, nc)
        metric = gen_metric(n, ["random", "line", "grid"][idx % 3], 6, int(rng.integers(0, 2**32)),
                            n_clients=nc, n_facilities=nf)
        for squared in (False, True):
            opt = opt_kmedian(metric, k, squared).value
            taus = [max(opt, 1)]
            # largest tau with OPT >= (1 + alpha + delta) * tau exercises soundness
            low = int(opt / (1 + alpha + delta))
            if low >= 1:
                taus.append(low)
            for tau in taus:
                rep = certify_kmedian(metric, k, tau, alpha, delta, squared)
                for key in ("completeness", "soundness"):
                    if key in rep.verdicts:
                        done[key] += 1
                if not rep.ok:
                    failures.append((idx, squared, tau, rep.verdicts))
    ok = not failures and done["completeness"] > 0 and done["soundness"] > 0
    report(5, ok, f"{len(configs)} metrics x (k-median, k-means): {done['completeness']} completeness and "
                  f"{done['soundness']} soundness verdicts, min-residual = OPT everywhere; {len(failures)} failures")
    assert ok, failures[:3]


# 6 -------------------------------------------------------------------------

def test_criterion_6_maxcover(report):
    complete = sound = 0
    failures = []
    for seed in range(40):
        k, ell = 1 + seed % 2, 1 + (seed // 2) % 2
        ls = [1 + (seed >> (3 + i)) % 2 for i in range(k)]
        rs = [1 + (seed >> (5 + i)) % 2 for i in range(ell)]
        inst = gen_maxcover(k, ell, ls, rs, 0.3, seed, planted=True)
        res = maxcover_value(inst)
        for T in (1, 2):
            art = maxcover_to_kmaxcov(inst, T)
            complete += 1
            if soundness_deficiency(art, art.canonical_solution(res.witness)) != 0:
                failures.append(("complete", seed, T))
    for seed in range(40):
        k, ell = 1 + seed % 2, 1 + (seed // 2) % 2
        ls = [1 + (seed >> (3 + i)) % 2 for i in range(k)]
        rs = [1 + (seed >> (5 + i)) % 2 for i in range(ell)]
        try:
            inst, v, _ = gen_maxcover_sound(k, ell, ls, rs, 0.5, 100 * seed)
        except Exception:
            continue
        A = max(len(g) for g in inst.right_groups)
        for T in (1, 2):
            art = maxcover_to_kmaxcov(inst, T)
            if comb(art.ss.n_sets, art.solution_size) > 10**6:
                continue
            unc, _ = min_deficiency(art)
            sound += 1
            if unc < deficiency_bound(art) or Fraction(unc, art.ss.universe_size) < Fraction(1, 2 * k**A):
                failures.append(("sound", seed, T, unc))
    ok = not failures and complete > 0 and sound > 0
    report(6, ok, f"{complete} complete reductions fully covered, {sound} soundness toys with min uncovered "
                  f">= lT/2; {len(failures)} failures")
    assert ok, failures[:3]


# 7 -------------------------------------------------------------------------

def test_criterion_7_greedy(report):
    # cardinality-constrained instances only; under color classes greedy is a 1/2-approximation
    cases = [(ss, k) for ss, k in small_systems(600, seed=7) if not isinstance(ss, ColoredSetSystem)]
    worst = Fraction(1)
    bad = 0
    for ss, k in cases:
        opt = opt_kmaxcov(ss, k).value
        g = greedy_kmaxcov(ss, k).value
        if opt:
            worst = min(worst, g / opt)
        if g < GREEDY_RATIO * opt:
            bad += 1
    ok = bad == 0
    report(7, ok, f"greedy >= 79/125 * OPT on {len(cases)} instances (worst ratio {worst}), {bad} violations")
    assert ok


# 8 -------------------------------------------------------------------------

DIGEST_SCRIPT = r"""
import hashlib
from fractions import Fraction
from fptgap.harness import gen_planted_cover, gen_metric, gen_maxcover
from fptgap.instances import serialize
from fptgap.reductions.csp import UniverseReductionParams, universe_reduce, cov_to_vcsp, pipeline
from fptgap.reductions.clustering import kmedian_to_multicov
from fptgap.reductions.maxcover import maxcover_to_kmaxcov
h = hashlib.sha256()
ss, _ = gen_planted_cover(5, 8, 2, Fraction(3, 4), 99)
h.update(serialize(ss).encode())
red = universe_reduce(ss, UniverseReductionParams(2, Fraction(3, 4), Fraction(1, 2), 12345, 40))
h.update(serialize(red.system).encode())
h.update(serialize(cov_to_vcsp(red.system, 2, Fraction(5, 16)).vcsp).encode())
res = pipeline(ss, 2, Fraction(3, 4), Fraction(1, 2), 77, 24)
for i, inst in zip(range(5), res.stream):
    h.update(serialize(inst.csp).encode())
m = gen_metric(6, "random", 9, 5)
h.update(serialize(m).encode())
for c in kmedian_to_multicov(m, 1, 3, Fraction(1), Fraction(1)):
    h.update(serialize(c.system).encode())
mc = gen_maxcover(2, 2, [2, 1], [2, 2], 0.4, 8, planted=True)
h.update(serialize(mc).encode())
h.update(serialize(maxcover_to_kmaxcov(mc, 2).ss).encode())
print(h.hexdigest())
"""


def test_criterion_8_determinism(report):
    runs = [
        subprocess.run([sys.executable, "-c", DIGEST_SCRIPT], capture_output=True, text=True, check=True).stdout
        for _ in range(2)
    ]
    local = {}
    exec(compile(DIGEST_SCRIPT.replace("print(h.hexdigest())", "digest = h.hexdigest()"), "digest", "exec"), local)
    same = runs[0] == runs[1] and runs[0].strip() == local["digest"]
    # round trips over every instance kind
    rng = np.random.Generator(np.random.PCG64(8))
    docs = []
    for ss, k in small_systems(40, seed=8):
        docs.append(ss)
        docs.append(cov_to_vcsp(ss, k, Fraction(1)).vcsp) if ss.n_sets >= 2 else None
    half = ValuedTwoCsp([("a", 1), ("b", 1), ("c", 1)], [VcspEdge(0, 1, [[0]]), VcspEdge(1, 2, [[0]])])
    docs.append(next(iter(vcsp_to_csp(half, H, Fraction(1, 4)))).csp)
    docs.append(random_vcsp(rng))
    docs.append(gen_metric(7, "random", 9, 3))
    docs.append(gen_maxcover(2, 2, [2, 2], [1, 2], 0.5, 3))
    metric = gen_metric(5, "line", 9, 4)
    docs.extend(c.coverage.wss for c in kmedian_to_multicov(metric, 1, 1, Fraction(1), Fraction(1)))
    trips = sum(deserialize(serialize(d)) == d and serialize(deserialize(serialize(d))) == serialize(d) for d in docs)
    ok = same and trips == len(docs)
    report(8, ok, f"reduction digest identical across 2 processes and in-process ({same}); "
                  f"{trips}/{len(docs)} bit-exact round trips")
    assert ok
