import argparse

from affine_fence.commands.handlers import EXIT_SUCCESS
from affine_fence.schemas.experiment_schemas import BenchConfig
from affine_fence.services.experiments import get_experiment_service
from affine_fence.storage.csv_writer import write_bench


def register(subparsers) -> None:
    defaults = BenchConfig()
    parser = subparsers.add_parser(
        "bench", help="Time sign assignment and enforcement over an architecture grid."
    )
    parser.add_argument("--widths", type=int, nargs="+", default=defaults.widths)
    parser.add_argument("--depths", type=int, nargs="+", default=defaults.depths)
    parser.add_argument("--regions", type=int, nargs="+", default=defaults.region_counts)
    parser.add_argument("--input-dim", type=int, default=defaults.input_dim)
    parser.add_argument("--output", default="bench.csv")
    parser.set_defaults(handler=cmd_bench)


def cmd_bench(args: argparse.Namespace) -> int:
    bench = BenchConfig(
        widths=args.widths,
        depths=args.depths,
        region_counts=args.regions,
        input_dim=args.input_dim,
    )
    rows = get_experiment_service().run_bench(
        bench.widths,
        bench.depths,
        bench.region_counts,
        args.seed,
        bench.input_dim,
        args.jobs,
    )
    path = write_bench(args.output, rows)
    print(
        f"{'N_Regions':>9} {'Width':>6} {'Depth':>6} "
        f"{'T_Assign_s':>11} {'T_Enforce_s':>12} status"
    )
    for row in rows:
        print(
            f"{row.n_regions:>9} {row.net_width:>6} {row.num_hidden_layers:>6} "
            f"{row.t_assign:>11.4f} {row.t_enforce:>12.4f} {row.status}"
        )
    print(f"wrote {path}")
    return EXIT_SUCCESS
