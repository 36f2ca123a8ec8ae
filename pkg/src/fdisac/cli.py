"""Command-line front end.

Verbs:

  run SPEC --out DIR [--seed N] [--jobs N]
      Execute the experiment spec and write results.csv plus manifest.json.
      Exit 0 only when every trial solved cleanly (no degraded runs).

  check --out DIR
      Audit a previously written output directory: hash, schema, row census,
      aggregate reproduction.

  dump-program SPEC [--seed N] [--out FILE]
      Build the convex subproblem for the spec's first sweep point at the
      zero design and print its variable/constraint manifest.

Exit codes: 0 success, 1 bad input or I/O failure, 2 run finished with
degraded trials, 3 audit mismatch.
"""

from __future__ import annotations

import argparse
import sys

from .harness import ExperimentSpec, check_outputs, masks_for, run_experiment, \
    trial_rng_pair, write_outputs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdisac",
        description="Full-duplex ISAC secrecy-rate experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("spec", help="path to an experiment JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the spec's seed_base")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker processes (default 1)")

    p_check = sub.add_parser("check", help="audit an output directory")
    p_check.add_argument("--out", required=True, help="directory to audit")

    p_dump = sub.add_parser("dump-program",
                            help="print the subproblem manifest")
    p_dump.add_argument("spec", help="path to an experiment JSON file")
    p_dump.add_argument("--seed", type=int, default=None,
                        help="override the spec's seed_base")
    p_dump.add_argument("--out", default=None,
                        help="write the manifest to this file instead of stdout")
    return parser


def _load_spec(path: str, seed: int | None) -> ExperimentSpec:
    spec = ExperimentSpec.from_file(path)
    if seed is not None:
        spec.seed_base = seed
    return spec


def _cmd_run(args) -> int:
    spec = _load_spec(args.spec, args.seed)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 1
    rows, ok = run_experiment(spec, jobs=args.jobs)
    manifest = write_outputs(spec, rows, ok, args.out)
    print(f"{spec.name}: {manifest['n_rows']} rows -> {args.out} "
          f"(sha256 {manifest['csv_sha256'][:12]})")
    if not ok:
        print("warning: some trials ended degraded", file=sys.stderr)
        return 2
    return 0


def _cmd_check(args) -> int:
    report = check_outputs(args.out)
    if report.ok:
        print(f"{args.out}: ok")
        return 0
    for problem in report.problems:
        print(f"audit: {problem}", file=sys.stderr)
    return 3


def _cmd_dump(args) -> int:
    from .metrics import DesignPoint
    from .scene import make_channel_set
    from .subproblem import build_p13
    from .surrogate import ExpansionPoint

    spec = _load_spec(args.spec, args.seed)
    cfg = spec.scenario_at(0)
    rng, _ = trial_rng_pair(spec.seed_base, 0, 0)
    channels = make_channel_set(cfg, rng)
    masks = masks_for(cfg, channels.theta)
    zero = DesignPoint.zeros(channels.n_tx, channels.n_rx,
                             channels.n_dl, channels.n_ul)
    program = build_p13(channels, cfg, masks,
                        ExpansionPoint.from_design(channels, zero))
    text = program.dump() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "check":
            return _cmd_check(args)
        return _cmd_dump(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
