"""Command line entry point: ``crustplan {run,sweep,calibrate,validate,plot}``.

Exit codes: 0 on success, 2 when planning or optimization fails (or a run does not
validate), 1 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .errors import ConfigError
from .scenario import (
    STATUS_SUCCESS,
    WORKERS_ENV,
    calibrate_compliance,
    emit_plots,
    load_scenario,
    run_pipeline,
    run_sweep,
    validate_run,
)

logger = logging.getLogger("crustplan")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


def _parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"0,3,5"`` or a mix such as ``"0-4,10"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    out = Path(args.out) if args.out else Path("runs") / f"{scn.name}_seed{args.seed}"
    report = run_pipeline(scn, seed=args.seed, out_dir=out)
    for a in report.attempts:
        print(f"grasp {a['grasp']}: plan={a['plan']} trajectory={a['trajectory']}")
    print(f"status: {report.status} ({out})")
    return EXIT_OK if report.status == STATUS_SUCCESS else EXIT_FAILURE


def _cmd_sweep(args) -> int:
    overrides = {}
    if args.max_time is not None:
        overrides["max_time"] = args.max_time
    if args.max_iterations is not None:
        overrides["max_iterations"] = args.max_iterations
    out = Path(args.out) if args.out else None
    _, summary = run_sweep(args.scenario, args.policies, args.seeds, out_dir=out, overrides=overrides)
    print("policy,runs,success_rate,mean_time_s,thickness_min,thickness_max")
    for r in summary:
        print(",".join(str(r[k]) for k in ("policy", "runs", "success_rate", "mean_time_s", "thickness_min", "thickness_max")))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    try:
        dtheta = calibrate_compliance(args.arm_length, args.displacement)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{dtheta:.9g} rad ({math.degrees(dtheta):.3f} deg)")
    return EXIT_OK


def _cmd_validate(args) -> int:
    problems = validate_run(args.run_dir)
    for p in problems:
        print(p)
    print("valid" if not problems else f"{len(problems)} violation(s)")
    return EXIT_OK if not problems else EXIT_FAILURE


def _cmd_plot(args) -> int:
    for p in emit_plots(args.run_dir):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crustplan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="plan and optimize one scenario")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="output directory (default runs/<name>_seed<N>)")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help=f"planning-only sweep over thickness policies (workers capped by {WORKERS_ENV})")
    s.add_argument("scenario")
    s.add_argument("--policies", nargs="+", required=True, help="'dynamic' or fixed thickness in meters")
    s.add_argument("--seeds", type=_parse_seeds, required=True, help="e.g. 0-9 or 1,2,5")
    s.add_argument("--out")
    s.add_argument("--max-time", type=float)
    s.add_argument("--max-iterations", type=int)
    s.set_defaults(func=_cmd_sweep)

    c = sub.add_parser("calibrate", help="compliance angle from a measured tip displacement")
    c.add_argument("--arm-length", type=float, required=True, help="meters")
    c.add_argument("--displacement", type=float, required=True, help="meters")
    c.set_defaults(func=_cmd_calibrate)

    v = sub.add_parser("validate", help="re-check a run directory")
    v.add_argument("run_dir")
    v.set_defaults(func=_cmd_validate)

    pl = sub.add_parser("plot", help="write plot data and a plotting script")
    pl.add_argument("run_dir")
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
