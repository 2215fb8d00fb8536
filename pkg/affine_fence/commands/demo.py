import argparse

from affine_fence.commands.handlers import EXIT_METHOD_FAILURE, EXIT_SUCCESS
from affine_fence.schemas.experiment_schemas import DemoExperimentSpec
from affine_fence.services.experiments import get_experiment_service

DEMO_NAMES = {"bias-only": "bias_only_demo", "hull": "hull_demo"}


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "demo", help="Bias-only infeasibility or convex-hull contrast demo."
    )
    parser.add_argument("which", choices=sorted(DEMO_NAMES))
    parser.add_argument("--margin", type=float, default=0.0)
    parser.add_argument("--samples", type=int, default=None)
    parser.add_argument("--output-dir", default=None)
    parser.set_defaults(handler=cmd_demo)


def cmd_demo(args: argparse.Namespace) -> int:
    name = DEMO_NAMES[args.which]
    spec = DemoExperimentSpec(
        name=name,
        margin=args.margin,
        verify_samples=args.samples,
        output_dir=args.output_dir or f"runs/{name}",
    )
    result = get_experiment_service().run_experiment(spec, args.seed)
    if result.bias_only_demo is not None:
        bounds = result.bias_only_demo.bias_only.bounds
        print(f"bias-only feasible: {result.bias_only_demo.bias_only.feasible}")
        if bounds is not None:
            print(f"  bounds: b >= {bounds.lower:g} and b <= {bounds.upper:g}")
        print(
            "weight-and-bias enforcement margin: "
            f"{result.bias_only_demo.margin_after_enforcement:.3e}"
        )
    if result.hull_demo is not None:
        hull = result.hull_demo
        for label, report in (("shared", hull.shared), ("unique", hull.unique)):
            print(
                f"{label} pattern: hull constant={report.hull_pattern_constant}, "
                f"hull residual={report.hull_affine_residual:.3e}"
            )
    print(f"passed: {result.passed}")
    return EXIT_SUCCESS if result.passed else EXIT_METHOD_FAILURE
