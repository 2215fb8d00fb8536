import argparse
from pathlib import Path

from affine_fence.commands.handlers import EXIT_SUCCESS
from affine_fence.schemas.enforce_schemas import EnforceConfig
from affine_fence.schemas.trainer_schemas import SignMethodEnum
from affine_fence.services.enforce import get_enforce_service
from affine_fence.services.exceptions import EnforcementFailedError, InvalidConfigError
from affine_fence.services.regions import RegionService
from affine_fence.services.signs import get_sign_service
from affine_fence.storage.repo.enforcement import EnforcementReportRepo
from affine_fence.storage.repo.model import ModelRepo
from affine_fence.storage.repo.region import RegionRepo


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "enforce", help="Assign unique sign patterns and enforce them on a model."
    )
    parser.add_argument("model", help="Model JSON file.")
    parser.add_argument("regions", help="Region set JSON file.")
    parser.add_argument(
        "--method",
        choices=[method.value for method in SignMethodEnum],
        default=SignMethodEnum.MEAN.value,
    )
    parser.add_argument("--margin", type=float, default=0.0, help="Margin delta >= 0.")
    parser.add_argument(
        "--reassign",
        action="store_true",
        help="Ignore a sign map embedded in the model and assign a new one.",
    )
    parser.add_argument(
        "--check-disjoint",
        action="store_true",
        help="Refuse region sets whose convex hulls intersect.",
    )
    parser.add_argument("--output", default=None, help="Adjusted model (default: in place).")
    parser.add_argument("--report", default=None, help="Enforcement report JSON.")
    parser.set_defaults(handler=cmd_enforce)


def cmd_enforce(args: argparse.Namespace) -> int:
    if args.margin < 0:
        raise InvalidConfigError("--margin", f"{args.margin} must be non-negative")
    model_file = ModelRepo.load(args.model)
    regions = RegionRepo.load(args.regions)
    if args.check_disjoint:
        overlapping = RegionService.check_disjoint(regions)
        if overlapping:
            raise InvalidConfigError("regions", f"overlapping pairs {overlapping}")
    net = model_file.to_network()
    sign_service = get_sign_service()
    enforce_service = get_enforce_service()

    sign_map = model_file.sign_map
    if args.reassign or sign_map is None or set(sign_map.region_ids) != set(regions.ids):
        preacts = sign_service.propagate_vertices(net, regions)
        sign_map = sign_service.ensure_unique(
            sign_service.assign(preacts, SignMethodEnum(args.method)), preacts
        )

    cfg = EnforceConfig(margin=args.margin)
    if args.jobs is not None:
        cfg.jobs = args.jobs
    enforced, report = enforce_service.enforce_signs(net, regions, sign_map, cfg)
    if not report.succeeded:
        raise EnforcementFailedError(report)

    output = Path(args.output or args.model)
    report_path = Path(args.report or output.with_name(f"{output.stem}_report.json"))
    ModelRepo.save_network(enforced, output, sign_map, regions)
    EnforcementReportRepo.save(report, report_path)

    margins = enforce_service.margins_by_region(enforced, regions, sign_map, args.margin)
    print(f"total shift: {report.total_shift:.6e}")
    print(f"worst margin deficit: {report.worst_margin_deficit:.6e}")
    for region_id, margin in margins.items():
        print(f"  region {region_id}: min sign*z - delta = {margin:.6e}")
    print(f"wrote {output} and {report_path}")
    return EXIT_SUCCESS
