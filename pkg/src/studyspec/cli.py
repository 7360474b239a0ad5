"""Study configuration tools: validate, sequence, simulate and analyze.

Exit codes: 0 success, 1 validation errors or denied lint warnings, 2 usage
error, 3 runtime error. Reports go to standard output (or ``--out``);
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .errors import StudyError
from .latin import LatinPool, load_pool, save_pool
from .lint import audit
from .provenance import dwell_all, exclude_by_dwell, participant_dwell, read_log, reconstruct_timeline
from .ranksum import rank_sum_test
from .rng import Stream
from .sequencer import default_assignments, realize_sequence
from .simulator import ParticipantPolicy, run_session, run_staircase, simulate_cohort
from .staircase import StaircaseParams
from .validate import check_study

EXIT_OK, EXIT_DENIED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

POLICY_NAMES = {
    "oracle": "oracle",
    "random": "uniformRandom",
    "weber": "weberObserver",
    "always-left": "alwaysLeft",
}


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _finding_line(f) -> str:
    return f"{f.severity.upper()} {f.code} {f.path}: {f.message}"


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _compile(args):
    compiled, report = check_study(_read_text(args.config), strict=not args.lenient)
    return compiled, report


def _load_or_fail(args):
    compiled, report = _compile(args)
    if compiled is None:
        for f in report.errors:
            print(_finding_line(f), file=sys.stderr)
        raise _Denied()
    return compiled


class _Denied(Exception):
    pass


def _assignments(args, config, index: int, participant_id: str) -> dict:
    rows = default_assignments(config, index, args.seed)
    for pool_path in args.pool or []:
        pool = load_pool(pool_path)
        row = pool.row_for(participant_id)
        if row is None:
            raise StudyError("E_MISSING_ASSIGNMENT", f"{participant_id!r} holds no row in {pool_path}")
        rows[pool.blockPath] = row
    return rows


def _policy(args) -> ParticipantPolicy:
    return ParticipantPolicy(
        kind=POLICY_NAMES[args.policy],
        jnd75=args.jnd75,
        slope=args.slope,
        abandonProb=getattr(args, "abandon", 0.0),
        seed=args.seed,
    )


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    compiled, report = _compile(args)
    if args.json:
        sys.stdout.write(_dumps(report.to_dict()))
    else:
        for f in report.errors + report.warnings:
            print(_finding_line(f))
    return EXIT_OK if compiled is not None else EXIT_DENIED


def cmd_lint(args) -> int:
    ok, findings = audit(_read_text(args.config), strict=not args.lenient)
    if args.json:
        sys.stdout.write(_dumps({"findings": [f.to_dict() for f in findings]}))
    else:
        for f in findings:
            print(_finding_line(f))
    if not ok or (args.deny_warnings and findings):
        return EXIT_DENIED
    return EXIT_OK


def cmd_sequence(args) -> int:
    compiled = _load_or_fail(args)
    pid = args.participant_id or str(args.participant_index)
    rows = _assignments(args, compiled.config, args.participant_index, pid)
    seq = realize_sequence(compiled.config, args.participant_index, args.seed, rows)
    if args.summary and not args.json:
        lines = []
        for i, item in enumerate(seq.items):
            name = item.componentName or f"<{item.orderParams.get('strategy')}>"
            tail = "  [interruption]" if item.isInterruption else ""
            lines.append(f"{i}  {item.blockPath}  {name}{tail}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(seq.to_json(), args.out)
    return EXIT_OK


def cmd_pool(args) -> int:
    action = args.pool_action
    if action == "init":
        if args.config:
            compiled = _load_or_fail(argparse.Namespace(config=args.config, lenient=False))
            from .config import iter_blocks

            sizes = {p: len(b.components) for b, p, _ in iter_blocks(compiled.config.sequence) if b.order == "latinSquare"}
            if args.block_path not in sizes:
                raise StudyError("E_NOT_LATIN", f"{args.block_path!r} is not a latinSquare block path; have {sorted(sizes)}")
            n = sizes[args.block_path]
        elif args.n is not None:
            n = args.n
        else:
            raise _Usage("pool init needs --n or --config")
        pool = LatinPool.create(args.block_path, n, args.seed)
        save_pool(pool, args.pool_file)
        result = pool.to_dict()
    else:
        pool = load_pool(args.pool_file)
        if action == "assign":
            result = {"participantId": args.participant, "row": pool.assign(args.participant, args.now)}
        elif action == "complete":
            pool.complete(args.participant)
            result = {"participantId": args.participant, "completed": True}
        elif action == "reject":
            pool.reject(args.participant, args.reason)
            result = {"participantId": args.participant, "rejected": True}
        elif action == "reclaim":
            result = {"reclaimed": pool.reclaim_expired(args.now, args.timeout)}
        else:
            result = {"balance": pool.balance_report(), "conservation": pool.conservation_holds()}
        if action != "report":
            save_pool(pool, args.pool_file)
    if args.json:
        sys.stdout.write(_dumps(result))
    elif action == "assign":
        print(" ".join(str(x) for x in result["row"]))
    elif action == "reclaim":
        for pid in result["reclaimed"]:
            print(pid)
    elif action == "report":
        for condition, counts in enumerate(result["balance"]):
            print(f"{condition}\t" + "\t".join(str(c) for c in counts))
    return EXIT_OK


def cmd_session_run(args) -> int:
    compiled = _load_or_fail(args)
    pid = args.participant_id or str(args.participant_index)
    rows = _assignments(args, compiled.config, args.participant_index, pid)
    seq = realize_sequence(compiled.config, args.participant_index, args.seed, rows)
    rng = Stream.derived("participant", args.seed, args.seed, args.participant_index)
    run = run_session(compiled.config, seq, _policy(args), rng, start=args.start)
    records = [r.to_dict() for r in run.session.answers]
    _emit(_dumps(records), args.out)
    print(
        f"{len(records)} trials, session {run.session.status} ({run.session.endReason})",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_staircase(args) -> int:
    params = StaircaseParams(
        baseR=args.base,
        startDiff=args.start_diff,
        sign=args.sign,
        approach=args.approach,
    )
    params.validate()
    policy = ParticipantPolicy(kind=POLICY_NAMES[args.policy], jnd75=args.observer_jnd, slope=args.slope, seed=args.seed)
    runs = [run_staircase(params, policy, args.seed + i) for i in range(args.runs)]
    if args.json:
        text = _dumps([r.row() for r in runs])
    else:
        buf = io.StringIO()
        fields = ["seed", "trials", "terminationReason", "jndEstimate", "attentionPassRate", "excluded"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(r.row() for r in runs)
        text = buf.getvalue()
    _emit(text, args.out)
    if args.figure:
        from .plotting import plot_staircase_runs

        plot_staircase_runs(runs, args.figure, args.observer_jnd)
    return EXIT_OK


def cmd_simulate(args) -> int:
    compiled = _load_or_fail(args)
    cohort = simulate_cohort(
        compiled.config,
        args.n,
        _policy(args),
        seed=args.seed,
        timeout_ms=args.timeout,
        inter_arrival_ms=args.gap,
        emit_logs=bool(args.emit_logs),
    )
    _emit(_dumps(cohort.to_dict()), args.out)
    if args.emit_logs:
        from .provenance import dump_log

        out_dir = Path(args.emit_logs)
        out_dir.mkdir(parents=True, exist_ok=True)
        for pid, events in cohort.logs.items():
            (out_dir / f"{pid}.jsonl").write_text(dump_log(events), encoding="utf-8")
            (out_dir / f"{pid}.json").write_text(
                _dumps({"participantId": pid, "trials": cohort.trialRecords[pid]}), encoding="utf-8"
            )
    if args.figure:
        from .plotting import plot_balance

        plot_balance(cohort.balance() or {}, args.figure)
    print(f"outcomes {cohort.outcomes()} in {cohort.wallClockMs:.0f} ms", file=sys.stderr)
    return EXIT_OK


def cmd_analyze_dwell(args) -> int:
    per_participant = {}
    rows = []
    for log_path in args.logs:
        pid = Path(log_path).stem
        events = read_log(log_path)
        for iid, report in dwell_all(events).items():
            for item, d in sorted(report.items.items()):
                rows.append({"participantId": pid, "instanceId": iid, "itemId": item, **d.to_dict()})
        per_participant[pid] = participant_dwell(events)
    kept = set(exclude_by_dwell(per_participant, args.threshold))
    if args.json:
        text = _dumps(
            {
                "rows": rows,
                "participants": {
                    pid: {"maxDwell": r.maxDwell, "kept": pid in kept} for pid, r in sorted(per_participant.items())
                },
            }
        )
    else:
        buf = io.StringIO()
        fields = ["participantId", "instanceId", "itemId", "totalDwell", "visits", "searchDwell", "nonSearchDwell", "excluded"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "excluded": str(row["participantId"] not in kept).lower()})
        text = buf.getvalue()
    _emit(text, args.out)
    for pid in sorted(set(per_participant) - kept):
        print(f"excluded {pid}: max dwell {per_participant[pid].maxDwell} ms", file=sys.stderr)
    if args.figure:
        from .plotting import plot_dwell

        plot_dwell({p: r for p, r in per_participant.items() if p in kept}, args.figure, args.threshold)
    return EXIT_OK


def _read_column(path: str) -> list[float]:
    values = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if values:
                    raise StudyError("E_BAD_INPUT", f"non-numeric value {row[0]!r} in {path}") from None
    return values


def cmd_analyze_ranksum(args) -> int:
    result = rank_sum_test(_read_column(args.a), _read_column(args.b))
    if args.json:
        sys.stdout.write(_dumps(result.to_dict()))
    else:
        method = "exact" if result.exact else "normal"
        print(f"W={result.W:g} p={result.pTwoSided:.6g} ({method})")
    return EXIT_OK


def cmd_replay_timeline(args) -> int:
    timeline = reconstruct_timeline(read_log(args.log))
    _emit(timeline.to_json(), args.out)
    if args.figure:
        from .plotting import plot_timeline

        plot_timeline(timeline, args.figure)
    return EXIT_OK


def cmd_export_csv(args) -> int:
    from .export import load_results_dir, tidy_csv

    _emit(tidy_csv(load_results_dir(args.results_dir)), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit a single JSON document")
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=0)
    cfg = argparse.ArgumentParser(add_help=False)
    cfg.add_argument("config", help="study configuration JSON file")
    cfg.add_argument("--lenient", action="store_true", help="ignore unknown fields instead of failing")
    observer = argparse.ArgumentParser(add_help=False)
    observer.add_argument("--policy", choices=sorted(POLICY_NAMES), default="oracle")
    observer.add_argument("--jnd75", type=float, default=0.12)
    observer.add_argument("--slope", type=float, default=0.04)

    parser = argparse.ArgumentParser(prog="studyspec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common, cfg], help="parse and validate a configuration")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("lint", parents=[common, cfg], help="report design-hygiene warnings")
    p.add_argument("--deny-warnings", action="store_true")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("sequence", parents=[common, cfg, seeded], help="realize one participant's sequence")
    p.add_argument("--participant-index", type=int, required=True)
    p.add_argument("--participant-id")
    p.add_argument("--pool", action="append", help="pool.json supplying Latin rows (repeatable)")
    p.add_argument("--summary", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("pool", help="manage a Latin square assignment pool")
    pool_sub = p.add_subparsers(dest="pool_action", required=True)
    q = pool_sub.add_parser("init", parents=[common, seeded])
    q.add_argument("pool_file")
    q.add_argument("--block-path", required=True)
    q.add_argument("--n", type=int)
    q.add_argument("--config")
    for action in ("assign", "complete", "reject"):
        q = pool_sub.add_parser(action, parents=[common])
        q.add_argument("pool_file")
        q.add_argument("--participant", required=True)
        if action == "assign":
            q.add_argument("--now", type=int, required=True)
        if action == "reject":
            q.add_argument("--reason", default="manual")
    q = pool_sub.add_parser("reclaim", parents=[common])
    q.add_argument("pool_file")
    q.add_argument("--now", type=int, required=True)
    q.add_argument("--timeout", type=int, required=True)
    q = pool_sub.add_parser("report", parents=[common])
    q.add_argument("pool_file")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("session", help="simulated sessions")
    session_sub = p.add_subparsers(dest="session_action", required=True)
    q = session_sub.add_parser("run", parents=[common, cfg, seeded, observer])
    q.add_argument("--participant-index", type=int, required=True)
    q.add_argument("--participant-id")
    q.add_argument("--pool", action="append")
    q.add_argument("--start", type=int, default=0, help="virtual start time (epoch ms)")
    q.add_argument("--out")
    q.set_defaults(func=cmd_session_run)

    p = sub.add_parser("staircase", parents=[common, seeded], help="run standalone staircases")
    p.add_argument("--base", type=float, required=True)
    p.add_argument("--approach", choices=["above", "below"], default="above")
    p.add_argument("--sign", choices=["positive", "negative"], default="positive")
    p.add_argument("--start-diff", type=float, default=0.1)
    p.add_argument("--observer-jnd", type=float, default=0.12)
    p.add_argument("--slope", type=float, default=0.04)
    p.add_argument("--policy", choices=sorted(POLICY_NAMES), default="weber")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--out")
    p.add_argument("--figure", help="write a PNG/PDF/SVG summary figure")
    p.set_defaults(func=cmd_staircase)

    p = sub.add_parser("simulate", parents=[common, cfg, seeded, observer], help="simulate a cohort")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--abandon", type=float, default=0.0)
    p.add_argument("--timeout", type=int, default=1_800_000)
    p.add_argument("--gap", type=int, help="inter-arrival gap in ms (default timeout + 60000)")
    p.add_argument("--out")
    p.add_argument("--emit-logs", metavar="DIR")
    p.add_argument("--figure")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="provenance analytics")
    an = p.add_subparsers(dest="analyze_action", required=True)
    q = an.add_parser("dwell", parents=[common])
    q.add_argument("logs", nargs="+")
    q.add_argument("--threshold", type=int, default=500)
    q.add_argument("--out")
    q.add_argument("--figure")
    q.set_defaults(func=cmd_analyze_dwell)
    q = an.add_parser("ranksum", parents=[common])
    q.add_argument("--a", required=True)
    q.add_argument("--b", required=True)
    q.set_defaults(func=cmd_analyze_ranksum)

    p = sub.add_parser("replay", help="replay provenance logs")
    rp = p.add_subparsers(dest="replay_action", required=True)
    q = rp.add_parser("timeline", parents=[common])
    q.add_argument("log")
    q.add_argument("--out")
    q.add_argument("--figure")
    q.set_defaults(func=cmd_replay_timeline)

    p = sub.add_parser("export", help="export results")
    ex = p.add_subparsers(dest="export_action", required=True)
    q = ex.add_parser("csv", parents=[common])
    q.add_argument("results_dir")
    q.add_argument("--out")
    q.set_defaults(func=cmd_export_csv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _Denied:
        return EXIT_DENIED
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"studyspec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StudyError as exc:
        print(f"studyspec: {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"studyspec: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
