"""Command-line front end.

Exit codes: 0 success (or compliant), 1 policy violations found (``check``),
2 usage or format error, 3 solver timeout.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import multiprocessing
import os
import sys
import tempfile
from pathlib import Path

from . import encode, evalkit, ingest, policy, solver
from .model import FormatError, ResourceKind

log = logging.getLogger("policygen")

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR, EXIT_TIMEOUT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _existing(paths):
    for p in paths:
        if not Path(p).exists():
            raise UsageError(f"no such file or directory: {p}")


def graph_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.iterdir() if q.suffix in (".json", ".jsonl"))
        else:
            files.append(p)
    return files


def load_specs(paths) -> list:
    _existing(paths)
    specs = []
    for p in paths:
        try:
            specs += ingest.load_specs(read_bytes(p))
        except FormatError as exc:
            raise FormatError(str(exc), where=str(p)) from None
    return specs


def cmd_abstract(args) -> int:
    _existing([args.pmap, *args.graphs])
    pm = ingest.load_permission_map(read_bytes(args.pmap))
    mode = ResourceKind(args.mode)
    specs, failed = [], 0
    stats = {"unmapped_apis": 0}
    files = graph_files(args.graphs)
    if not files:
        log.warning("no app-graph files found in %s", " ".join(args.graphs))
    for f in files:
        try:
            data = read_bytes(str(f))
            graphs = (list(ingest.iter_app_graphs(data)) if f.suffix == ".jsonl"
                      else [ingest.load_app_graph(data)])
        except FormatError as exc:
            failed += 1
            log.error("%s: %s", f, exc)
            continue
        for g in graphs:
            specs.append(ingest.derive_spec(g, pm, mode, stats))
    specs.sort(key=lambda s: s.app_id)
    emit(ingest.dump_specs(specs), args.out)
    print(f"abstract: {len(specs)} apps, {failed} failed files, "
          f"{stats['unmapped_apis']} unmapped apis skipped", file=sys.stderr)
    return EXIT_ERROR if failed and args.strict else EXIT_OK


def _solve_in_child(fn, inst, conn):
    conn.send(fn(inst))
    conn.close()


def run_solver(name: str, inst, seed: int, timeout: float | None):
    """Returns ``(result, timed_out)``.  Exact and brute run in a child
    process when a timeout is set; greedy is the fallback on expiry."""
    if name == "greedy":
        return solver.solve_greedy(inst, seed=seed), False
    fn = solver.SOLVERS[name]
    if timeout is None:
        return fn(inst), False
    ctx = multiprocessing.get_context("fork")
    parent, child = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_solve_in_child, args=(fn, inst, child), daemon=True)
    proc.start()
    child.close()
    if parent.poll(timeout):
        result = parent.recv()
        proc.join()
        return result, False
    proc.terminate()
    proc.join()
    return solver.solve_greedy(inst, seed=seed), True


def cmd_infer(args) -> int:
    if args.timeout_s is not None and args.timeout_s <= 0:
        raise UsageError("--timeout-s must be positive")
    specs = load_specs(args.specs)
    benign, malware = evalkit.partition(specs)
    if args.mode and specs and specs[0].resource_kind.value != args.mode:
        raise UsageError(f"specs are {specs[0].resource_kind.value}-based, --mode is {args.mode}")
    inst = encode.build_instance(benign, malware, args.wb, args.wm)
    for w in inst.warnings:
        log.warning("%s", w)
    if args.emit_wcnf:
        write_atomic(args.emit_wcnf, encode.export_wcnf(inst))
    result, timed_out = run_solver(args.solver, inst, args.seed, args.timeout_s)
    metadata = {
        "name": args.name,
        "solver": args.solver if not timed_out else f"{args.solver} (timeout, greedy fallback)",
        "optimal": str(result.optimal).lower(),
        "weights": f"w_b={args.wb} w_m={args.wm}",
        "seed": args.seed,
        "score": f"{result.score}/{inst.total_weight}",
        "corpus": f"{len(benign)} benign, {len(malware)} malware",
    }
    kind = ResourceKind(args.mode) if args.mode else None
    pol = policy.policy_from_solution(inst, result.assignment, metadata, kind)
    write_atomic(args.out, policy.serialize_policy(pol))
    print(f"infer: {len(pol)} rules, score {result.score}/{inst.total_weight}, "
          f"optimal={result.optimal}", file=sys.stderr)
    return EXIT_TIMEOUT if timed_out else EXIT_OK


def cmd_check(args) -> int:
    if args.explain and not args.graph:
        raise UsageError("--explain requires app graphs (--graph with --pmap): "
                         "witness chains cannot be recovered from specs")
    if args.graph and not args.pmap:
        raise UsageError("--graph requires --pmap")
    if not args.graph and not args.spec:
        raise UsageError("provide --graph or --spec")
    _existing([args.policy])
    pol = policy.parse_policy(read_bytes(args.policy))
    reports = []
    if args.graph:
        _existing([args.pmap, *args.graph])
        pm = ingest.load_permission_map(read_bytes(args.pmap))
        for f in graph_files(args.graph):
            data = read_bytes(str(f))
            graphs = (list(ingest.iter_app_graphs(data)) if f.suffix == ".jsonl"
                      else [ingest.load_app_graph(data)])
            for g in graphs:
                if args.explain:
                    violations = policy.explain(pol, g, pm)
                else:
                    spec = ingest.derive_spec(g, pm, pol.resource_kind)
                    violations = [policy.Violation(r) for r in policy.check(pol, spec)]
                reports.append(policy.violation_report(g.app_id, violations))
    for s in load_specs(args.spec or []):
        violations = [policy.Violation(r) for r in policy.check(pol, s)]
        reports.append(policy.violation_report(s.app_id, violations))
    reports.sort(key=lambda r: r["app_id"])
    emit("".join(policy.dump_report(r) + "\n" for r in reports), args.out)
    return EXIT_VIOLATION if any(r["violations"] for r in reports) else EXIT_OK


def cmd_eval(args) -> int:
    _existing([args.policy])
    pol = policy.parse_policy(read_bytes(args.policy))
    benign, malware = evalkit.partition(load_specs(args.specs))
    if not benign and not malware:
        log.warning("empty test sets: rates reported as 0")
    report = evalkit.evaluate(pol, benign, malware, name=args.name)
    text = evalkit.dump_report_json(report) if args.json else evalkit.render_table([report])
    emit(text, args.out)
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    if args.profile:
        _existing([args.profile])
        try:
            profile = evalkit.GenProfile.from_json(json.loads(read_bytes(args.profile)))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"bad profile: {exc}", where=args.profile) from None
    else:
        profile = evalkit.acceptance_profile()
    if args.seed is not None:
        profile = dataclasses.replace(profile, seed=args.seed)
    benign, malware = evalkit.gen_corpus(profile)
    specs = benign + malware
    out = Path(args.out)
    if args.split:
        train, test = evalkit.split_corpus(specs, args.split, profile.seed)
        write_atomic(out / "train.jsonl", ingest.dump_specs(train))
        write_atomic(out / "test.jsonl", ingest.dump_specs(test))
    else:
        write_atomic(out / "corpus.jsonl", ingest.dump_specs(specs))
    if args.graphs:
        lines = [json.dumps(evalkit.spec_to_graph(s).to_json(), separators=(",", ":"))
                 for s in specs]
        write_atomic(out / "graphs.jsonl", "".join(line + "\n" for line in lines))
        write_atomic(out / "permissions.tsv", evalkit.corpus_permission_map(specs).to_tsv())
    write_atomic(out / "profile.json", json.dumps(profile.to_json(), indent=2) + "\n")
    print(f"gen-corpus: {len(benign)} benign, {len(malware)} malware -> {out}",
          file=sys.stderr)
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _fraction(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="policygen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", help="derive specs from app call graphs")
    p.add_argument("graphs", nargs="+", help="app-graph .json/.jsonl files or directories")
    p.add_argument("--pmap", required=True, help="api -> permission TSV")
    p.add_argument("--mode", choices=["permission", "api"], default="permission")
    p.add_argument("--out", help="spec JSONL output (default: stdout)")
    p.add_argument("--strict", action="store_true", help="exit 2 if any input fails")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("infer", help="infer a policy from labeled specs")
    p.add_argument("specs", nargs="+", help="spec JSONL files (labels taken from records)")
    p.add_argument("--out", required=True, help="policy output path")
    p.add_argument("--mode", choices=["permission", "api"])
    p.add_argument("--solver", choices=["exact", "greedy", "brute"], default="exact")
    p.add_argument("--wb", type=_positive_int, default=1, help="benign clause weight")
    p.add_argument("--wm", type=_positive_int, default=1, help="malware clause weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout-s", type=float, help="solver time limit in seconds")
    p.add_argument("--emit-wcnf", metavar="PATH", help="also write the WCNF encoding")
    p.add_argument("--name", default="policy")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("check", help="check apps against a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--graph", nargs="+", help="app-graph files")
    p.add_argument("--pmap", help="api -> permission TSV (with --graph)")
    p.add_argument("--spec", nargs="+", help="spec JSONL files")
    p.add_argument("--explain", action="store_true", help="add witness call chains")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", help="detection / exclusion rates on labeled specs")
    p.add_argument("specs", nargs="+")
    p.add_argument("--policy", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--name", help="row label (default: policy name)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-corpus", help="write a seeded synthetic corpus")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--profile", help="GenProfile JSON")
    g.add_argument("--acceptance", action="store_true",
                   help="built-in acceptance profile (default)")
    p.add_argument("--seed", type=int, help="override the profile seed")
    p.add_argument("--split", type=_fraction, help="also split into train/test")
    p.add_argument("--graphs", action="store_true", help="emit app graphs and permission map")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_corpus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, FormatError, ValueError, RuntimeError) as exc:
        print(f"policygen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
