import argparse

from affine_fence.commands.handlers import EXIT_METHOD_FAILURE, EXIT_SUCCESS
from affine_fence.core.config import config
from affine_fence.schemas.verifier_schemas import AffinityReport
from affine_fence.services.exceptions import InvalidConfigError, PatternMismatchError
from affine_fence.services.verifier import get_verifier_service
from affine_fence.storage.repo.model import ModelRepo
from affine_fence.storage.repo.region import RegionRepo
from affine_fence.storage.repo.sign_map import SignMapRepo

TABLE_HEADER = (
    f"{'region':<12} {'constant':>8} {'matched':>8} {'residual':>11} "
    f"{'closed':>11} {'violation':>11} {'certified':>9}"
)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "verify", help="Certify that every region lies in its own affine polytope."
    )
    parser.add_argument("model", help="Model JSON file.")
    parser.add_argument("regions", help="Region set JSON file.")
    parser.add_argument(
        "sign_map",
        nargs="?",
        default=None,
        help="Sign map JSON file (default: the map embedded in the model).",
    )
    parser.add_argument("--samples", type=int, default=None)
    parser.set_defaults(handler=cmd_verify)


def format_row(report: AffinityReport) -> str:
    closed = (
        f"{report.closed_form_residual:>11.3e}"
        if report.closed_form_residual is not None
        else f"{'-':>11}"
    )
    return (
        f"{report.region_id:<12} {str(report.pattern_constant):>8} "
        f"{str(report.assigned_pattern_matched):>8} {report.affine_residual:>11.3e} "
        f"{closed} {report.sampled_constraint_violation:>11.3e} {str(report.certified):>9}"
    )


def cmd_verify(args: argparse.Namespace) -> int:
    model_file = ModelRepo.load(args.model)
    regions = RegionRepo.load(args.regions)
    sign_map = SignMapRepo.load(args.sign_map) if args.sign_map else model_file.sign_map
    if sign_map is None:
        raise InvalidConfigError("sign_map", "no sign map given and none embedded in the model")
    missing = set(regions.ids) - set(sign_map.region_ids)
    if missing:
        raise InvalidConfigError("sign_map", f"no pattern for regions {sorted(missing)}")
    samples = config.verify_samples if args.samples is None else args.samples
    minimum = max(region.num_vertices + region.dim + 1 for region in regions.regions)
    if samples < minimum:
        raise InvalidConfigError("--samples", f"{samples} is below the minimum {minimum}")

    net = model_file.to_network()
    verifier = get_verifier_service()
    reports = [
        verifier.certify_region(net, region, sign_map.pattern(region.id), samples, args.seed)
        for region in regions.regions
    ]
    distinct = verifier.certify_distinct(sign_map)

    print(TABLE_HEADER)
    for report in reports:
        print(format_row(report))
    print(f"patterns distinct: {distinct}")

    for report in reports:
        if report.counterexample is not None:
            raise PatternMismatchError(report.region_id, report.counterexample)
    if distinct and all(report.certified for report in reports):
        return EXIT_SUCCESS
    return EXIT_METHOD_FAILURE
