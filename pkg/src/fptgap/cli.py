"""Command-line front end.

Every command prints a JSON document; commands with an output directory also
write ``report.json`` there.  Exit status is 0 iff every verdict passed (or,
for commands without verdicts, iff the command succeeded).
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import instances as ins
from .errors import BudgetExceeded, ParameterError
from .harness import (
    PlantedCertificate,
    certify_kmedian,
    certify_pipeline,
    gen_maxcover,
    gen_metric,
    gen_planted_cover,
    jsonable,
)
from .oracles import (
    DEFAULT_BUDGET,
    greedy_kmaxcov,
    maxcover_value,
    opt_kmaxcov,
    opt_kmedian,
    val_csp,
    val_vcsp,
)
from .reductions import clustering, csp, maxcover


def rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from None


def int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _dump_json(doc, path: Path | None) -> None:
    text = json.dumps(jsonable(doc), sort_keys=True, separators=(",", ":")) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _emit(args, doc) -> None:
    print(json.dumps(jsonable(doc), sort_keys=True, indent=2))
    if args.out:
        _dump_json(doc, Path(args.out))


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(path: str):
    notes: list[str] = []
    inst = ins.load(path, notes)
    for n in notes:
        print(f"note: {n}", file=sys.stderr)
    return inst


# --------------------------------------------------------------------------
# solve

def cmd_solve(args) -> int:
    inst = _load(args.input)
    p = args.problem
    if p == "maxcov":
        if isinstance(inst, ins.WeightedSetSystem):
            raise ParameterError("weighted systems are not solved directly")
        fn = greedy_kmaxcov if args.greedy else opt_kmaxcov
        res = fn(inst, args.k) if args.greedy else fn(inst, args.k, args.budget)
    elif p == "csp":
        res = val_csp(inst, args.budget)
    elif p == "vcsp":
        res = val_vcsp(inst, args.budget)
    elif p == "kmedian":
        res = opt_kmedian(inst, args.k, args.squared, args.budget)
    else:
        res = maxcover_value(inst, args.budget)
    _emit(args, res.to_dict())
    return 0


# --------------------------------------------------------------------------
# reduce

def cmd_reduce_uni(args) -> int:
    ss = _load(args.input)
    params = csp.UniverseReductionParams(args.k, args.tau, args.delta, args.seed, args.m_override)
    red = csp.universe_reduce(ss, params)
    d = _out_dir(args)
    ins.dump(red.system, d / "reduced.json")
    report = {"k": args.k, "tau": args.tau, "delta": args.delta, "seed": args.seed,
              "m": red.m, "m_override": args.m_override, "p": red.p, "files": ["reduced.json"]}
    _dump_json(report, d / "report.json")
    _emit(args, report)
    return 0


def cmd_reduce_cov2vcsp(args) -> int:
    ss = _load(args.input)
    art = csp.cov_to_vcsp(ss, args.k, args.tau)
    d = _out_dir(args)
    ins.dump(art.vcsp, d / "vcsp.json")
    report = {"k": args.k, "tau": args.tau, "c": art.c, "M": art.M,
              "partition": art.partition, "x_alphabets": art.x_alphabets,
              "y_encoding": "base-(k+1) digits over each block, lowest digit = smallest element",
              "files": ["vcsp.json"]}
    _dump_json(report, d / "report.json")
    _emit(args, report)
    return 0


def _write_stream(stream: csp.ThetaStream, d: Path, limit: int) -> list[dict]:
    rows = []
    for idx, th in enumerate(stream):
        if idx >= limit:
            break
        name = f"csp_{idx:06d}.json"
        ins.dump(th.csp, d / name)
        rows.append({"file": name, "theta": th.theta})
    return rows


def _stream_report(stream: csp.ThetaStream, budget: int) -> dict:
    return {
        "c": stream.c, "s": stream.s, "eps": stream.eps, "gamma": stream.gamma, "B": stream.B,
        "edges": stream.ell, "mean_threshold": stream.mean_threshold,
        "weak_mean_threshold": stream.weak_mean_threshold, "sum_threshold": stream.sum_threshold,
        "short_circuit": stream.short_circuit, "instance_count": stream.count(),
        "decision_rule": "YES iff short_circuit or some emitted instance has value >= 1-eps",
        "some_instance_fully_satisfiable": stream.has_satisfiable(budget),
        "emitted_value_upper_bound": stream.value_upper_bound(budget) if not stream.short_circuit else None,
    }


def cmd_reduce_vcsp2csp(args) -> int:
    vcsp = _load(args.input)
    stream = csp.vcsp_to_csp(vcsp, args.c, args.s)
    d = _out_dir(args)
    report = _stream_report(stream, args.budget)
    report["written"] = _write_stream(stream, d, args.limit)
    _dump_json(report, d / "report.json")
    _emit(args, {k: v for k, v in report.items() if k != "written"} | {"written": len(report["written"])})
    return 0


def cmd_reduce_kmed2cov(args) -> int:
    metric = _load(args.input)
    d = _out_dir(args)
    report: dict = {}
    written = 0
    for inst in clustering.kmedian_to_multicov(
        metric, args.k, args.tau, args.alpha, args.delta, args.squared, args.radius_mode,
        args.universe_cap, report,
    ):
        if written >= args.limit:
            continue
        name = f"cov_{written:06d}.json"
        ins.dump(inst.system, d / name)
        report["guesses"][-1]["file"] = name
        written += 1
    report["emitted"] = sum(1 for g in report["guesses"] if g.get("emitted"))
    report["written"] = written
    _dump_json(report, d / "report.json")
    _emit(args, {k: v for k, v in report.items() if k != "guesses"})
    return 0


def cmd_reduce_maxcover2cov(args) -> int:
    inst = _load(args.input)
    art = maxcover.maxcover_to_kmaxcov(inst, args.T, args.universe_cap)
    out = Path(args.out_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    ins.dump(art.ss, out)
    if args.emit_codec:
        _dump_json(art.codec_dict(), Path(args.emit_codec))
    report = {"T": art.T, "k": art.k, "l": art.ell, "universe_size": art.ss.universe_size,
              "sets": art.ss.n_sets, "solution_size": art.solution_size,
              "deficiency_bound": maxcover.deficiency_bound(art)}
    _emit(args, report)
    return 0


def cmd_pipeline(args) -> int:
    ss = _load(args.input)
    res = csp.pipeline(ss, args.k, args.tau, args.delta, args.seed, args.m_override)
    d = _out_dir(args)
    ins.dump(res.reduction.system, d / "reduced.json")
    ins.dump(res.artifact.vcsp, d / "vcsp.json")
    report = dict(res.report)
    report.update(_stream_report(res.stream, args.budget))
    report["written"] = _write_stream(res.stream, d, args.limit)
    _dump_json(report, d / "report.json")
    _emit(args, {k: v for k, v in report.items() if k != "written"} | {"written": len(report["written"])})
    return 0


# --------------------------------------------------------------------------
# generate / certify

def cmd_generate(args) -> int:
    if args.what == "planted-cover":
        system, cert = gen_planted_cover(
            args.n_sets, args.m, args.k, args.tau, args.seed, args.kind, args.delta,
            args.colored, args.max_attempts, args.budget,
        )
        doc = {"instance": ins.to_dict(system), "certificate": cert.to_dict()}
        if args.instance_out:
            ins.dump(system, args.instance_out)
    elif args.what == "metric":
        metric = gen_metric(
            args.n, args.shape, args.d_max, args.seed,
            positions=args.positions, clients=args.clients, facilities=args.facilities,
            n_clients=args.n_clients, n_facilities=args.n_facilities,
        )
        doc = {"instance": ins.to_dict(metric)}
        if args.instance_out:
            ins.dump(metric, args.instance_out)
    else:
        inst = gen_maxcover(args.k, len(args.right_sizes), args.left_sizes, args.right_sizes,
                            args.density, args.seed, args.planted)
        doc = {"instance": ins.to_dict(inst), "value": maxcover_value(inst, args.budget).to_dict()}
        if args.instance_out:
            ins.dump(inst, args.instance_out)
    _emit(args, doc)
    return 0


def _read_certificate(path: str) -> PlantedCertificate:
    doc = json.loads(Path(path).read_text())
    if "certificate" in doc:
        doc = doc["certificate"]
    fr = lambda x: Fraction(x[0], x[1])  # noqa: E731
    return PlantedCertificate(doc["kind"], doc["k"], fr(doc["tau"]), fr(doc["delta"]),
                              fr(doc["value"]), tuple(doc["witness"]), doc.get("attempts", 1))


def cmd_certify(args) -> int:
    if args.what == "pipeline":
        ss = _load(args.input)
        cert = _read_certificate(args.certificate)
        report = certify_pipeline(ss, cert, cert.k, cert.tau, cert.delta, args.seed,
                                  args.m_override, args.trials, args.budget,
                                  reduce_universe=not args.skip_universe_reduction)
    else:
        metric = _load(args.input)
        report = certify_kmedian(metric, args.k, args.tau, args.alpha, args.delta,
                                 args.squared, args.radius_mode, args.budget)
    doc = report.to_dict()
    _emit(args, {"verdicts": doc["verdicts"], "statistics": doc["statistics"], "notes": doc["notes"]})
    if args.out:
        _dump_json(doc, Path(args.out))
    return 0 if report.ok else 1


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    # maxcover2cov uses --out for its set-system file, so it gets the flags without it
    bare = argparse.ArgumentParser(add_help=False)
    bare.add_argument("--seed", type=int, default=0)
    bare.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="enumeration cap")
    bare.add_argument("--trials", type=int, default=50)
    common = argparse.ArgumentParser(add_help=False, parents=[bare])
    common.add_argument("--out", help="also write the JSON result here")

    ap = argparse.ArgumentParser(prog="fptgap", description=__doc__.splitlines()[0], parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="exact oracles")
    s.add_argument("problem", choices=["maxcov", "csp", "vcsp", "kmedian", "maxcover"])
    s.add_argument("--input", required=True)
    s.add_argument("--k", type=int)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", default=True)
    g.add_argument("--greedy", action="store_true")
    s.add_argument("--squared", action="store_true")
    s.set_defaults(fn=cmd_solve)

    r = sub.add_parser("reduce", help="single reduction stages")
    rs = r.add_subparsers(dest="stage", required=True)
    x = rs.add_parser("uni", parents=[common])
    x.add_argument("--input", required=True)
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--tau", type=rational, required=True)
    x.add_argument("--delta", type=rational, required=True)
    x.add_argument("--m-override", type=int)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(fn=cmd_reduce_uni)

    x = rs.add_parser("cov2vcsp", parents=[common])
    x.add_argument("--input", required=True)
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--tau", type=rational, required=True)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(fn=cmd_reduce_cov2vcsp)

    x = rs.add_parser("vcsp2csp", parents=[common])
    x.add_argument("--input", required=True)
    x.add_argument("--c", type=rational, required=True)
    x.add_argument("--s", type=rational, required=True)
    x.add_argument("--out-dir", required=True)
    x.add_argument("--limit", type=int, default=100, help="max instance files written")
    x.set_defaults(fn=cmd_reduce_vcsp2csp)

    x = rs.add_parser("kmed2cov", parents=[common])
    x.add_argument("--input", required=True)
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--tau", type=int, required=True)
    x.add_argument("--alpha", type=rational, required=True)
    x.add_argument("--delta", type=rational, required=True)
    x.add_argument("--squared", action="store_true")
    x.add_argument("--radius-mode", choices=["exact", "geometric"], default="exact")
    x.add_argument("--universe-cap", type=int, default=clustering.DEFAULT_UNIVERSE_CAP)
    x.add_argument("--out-dir", required=True)
    x.add_argument("--limit", type=int, default=1000)
    x.set_defaults(fn=cmd_reduce_kmed2cov)

    x = rs.add_parser("maxcover2cov", parents=[bare])
    x.add_argument("--input", required=True)
    x.add_argument("--T", type=int, required=True)
    x.add_argument("--out", dest="out_file", required=True, help="set system file")
    x.add_argument("--emit-codec")
    x.add_argument("--universe-cap", type=int, default=maxcover.DEFAULT_UNIVERSE_CAP)
    x.set_defaults(fn=cmd_reduce_maxcover2cov, out=None)

    x = sub.add_parser("pipeline", parents=[common], help="composed coverage -> 2-CSP reduction")
    x.add_argument("--input", required=True)
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--tau", type=rational, required=True)
    x.add_argument("--delta", type=rational, required=True)
    x.add_argument("--m-override", type=int)
    x.add_argument("--out-dir", required=True)
    x.add_argument("--limit", type=int, default=100)
    x.set_defaults(fn=cmd_pipeline)

    gen = sub.add_parser("generate", help="instance generators")
    gs = gen.add_subparsers(dest="what", required=True)
    x = gs.add_parser("planted-cover", parents=[common])
    x.add_argument("--n-sets", type=int, required=True)
    x.add_argument("--m", type=int, required=True)
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--tau", type=rational, default=Fraction(1))
    x.add_argument("--delta", type=rational, default=Fraction(1, 2))
    x.add_argument("--kind", choices=["YES", "NO"], default="YES")
    x.add_argument("--colored", action="store_true")
    x.add_argument("--max-attempts", type=int, default=10_000)
    x.add_argument("--instance-out")
    x = gs.add_parser("metric", parents=[common])
    x.add_argument("--n", type=int, required=True)
    x.add_argument("--shape", choices=["line", "grid", "random"], default="random")
    x.add_argument("--d-max", type=int, default=10)
    x.add_argument("--positions", type=int_list)
    x.add_argument("--clients", type=int_list)
    x.add_argument("--facilities", type=int_list)
    x.add_argument("--n-clients", type=int)
    x.add_argument("--n-facilities", type=int)
    x.add_argument("--instance-out")
    x = gs.add_parser("maxcover", parents=[common])
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--left-sizes", type=int_list, required=True)
    x.add_argument("--right-sizes", type=int_list, required=True)
    x.add_argument("--density", type=float, default=0.3)
    x.add_argument("--planted", action="store_true")
    x.add_argument("--instance-out")
    gen.set_defaults(fn=cmd_generate)
    for p in gs.choices.values():
        p.set_defaults(fn=cmd_generate)

    cert = sub.add_parser("certify", help="end-to-end gap certification")
    cs = cert.add_subparsers(dest="what", required=True)
    x = cs.add_parser("pipeline", parents=[common])
    x.add_argument("--input", required=True)
    x.add_argument("--certificate", required=True)
    x.add_argument("--m-override", type=int)
    x.add_argument("--skip-universe-reduction", action="store_true",
                   help="run only the deterministic stages")
    x = cs.add_parser("kmedian", parents=[common])
    x.add_argument("--input", required=True)
    x.add_argument("--k", type=int, required=True)
    x.add_argument("--tau", type=int, required=True)
    x.add_argument("--alpha", type=rational, required=True)
    x.add_argument("--delta", type=rational, required=True)
    x.add_argument("--squared", action="store_true")
    x.add_argument("--radius-mode", choices=["exact", "geometric"], default="exact")
    for p in cs.choices.values():
        p.set_defaults(fn=cmd_certify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParameterError, BudgetExceeded, ins.ParseError, ins.ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
