"""Command-line entry points for the twin experiments and static demos."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import PolyfiltError
from .harness import (
    ExperimentConfig,
    run_experiment,
    run_static_demo,
    write_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyfilt", description="Polytope-filter experiments and demos"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a twin experiment and write a CSV")
    run.add_argument("--scenario", required=True, choices=["ikeda", "l96"])
    run.add_argument(
        "--filters",
        default="enkf,bpf,engmf,bcpf,enkcpf,nofilter",
        help="comma-separated filter names",
    )
    run.add_argument(
        "--ensemble-sizes", default="100", help="comma-separated ensemble sizes"
    )
    run.add_argument("--steps", type=int, default=550)
    run.add_argument("--discard", type=int, default=50)
    run.add_argument("--mc-reps", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--inflation", type=float, default=1.001)
    run.add_argument(
        "--loc-radius",
        type=float,
        default=None,
        help="localization radius; 0 disables, omit for the scenario default",
    )
    run.add_argument("--defensive", type=float, default=1e-4)
    run.add_argument("--hr-steps", type=int, default=25)
    run.add_argument("--workers", type=int, default=1)

    demo = sub.add_parser("demo", help="run a static example and write a JSON dump")
    demo.add_argument(
        "--which", required=True, choices=["cpf", "ecpf", "kcpf", "ekcpf", "banana"]
    )
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--out", required=True, help="output JSON path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "demo":
            run_static_demo(args.which, args.out, args.seed)
            print(f"wrote {args.out}")
            return 0
        cfg = ExperimentConfig(
            scenario=args.scenario,
            filters=tuple(f.strip() for f in args.filters.split(",") if f.strip()),
            ensemble_sizes=tuple(
                int(s) for s in args.ensemble_sizes.split(",") if s.strip()
            ),
            steps=args.steps,
            discard=args.discard,
            mc_reps=args.mc_reps,
            seed=args.seed,
            out=args.out,
            inflation=args.inflation,
            loc_radius=args.loc_radius,
            defensive=args.defensive,
            hr_steps=args.hr_steps,
            workers=args.workers,
        )
    except (PolyfiltError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    result = run_experiment(cfg)
    write_csv(result, cfg.out)
    total_div = 0
    for (f, N), cell in sorted(result.cells.items()):
        print(
            f"{f:>16s} N={N:<6d} rmse={cell.rmse:.6g} "
            f"(+/- {cell.stderr:.2g}, diverged {cell.diverged}/{cell.reps}, "
            f"{cell.wall_time:.1f}s)"
        )
        total_div += cell.diverged
    print(f"wrote {cfg.out}")
    if all(
        not np.isfinite(cell.rmse)
        for (f, _), cell in result.cells.items()
        if f != "nofilter"
    ):
        print("all filter replicates diverged", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
