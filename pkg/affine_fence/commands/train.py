import argparse

from affine_fence.commands.handlers import EXIT_METHOD_FAILURE, EXIT_SUCCESS
from affine_fence.schemas.experiment_schemas import ExperimentResult, TrainingExperimentSpec
from affine_fence.services.experiments import get_experiment_service
from affine_fence.storage.repo.experiment import ExperimentSpecRepo


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "train", help="Run an experiment described by a JSON config."
    )
    parser.add_argument("config", help="Path to the experiment JSON config.")
    parser.add_argument(
        "--output-dir", default=None, help="Overrides output_dir of the config."
    )
    parser.set_defaults(handler=cmd_train)


def print_summary(result: ExperimentResult) -> None:
    print(f"experiment: {result.name} (seed {result.seed})")
    if result.final_violation is not None:
        print(
            f"  violation: baseline {result.baseline_violation:.6g}, "
            f"final {result.final_violation:.6g}"
        )
        print(
            f"  {result.metric_name}: baseline {result.baseline_metric:.6g}, "
            f"final {result.final_metric:.6g}"
        )
    if result.train_report is not None:
        print(f"  stop reason: {result.train_report.stop_reason.value}")
    for certificate in result.certifications:
        print(
            f"  region {certificate.region_id}: certified={certificate.certified} "
            f"residual={certificate.affine_residual:.3e}"
        )
    print(f"  passed: {result.passed}")
    for artifact in result.artifacts:
        print(f"  wrote {artifact}")


def cmd_train(args: argparse.Namespace) -> int:
    spec = ExperimentSpecRepo.load(args.config)
    if args.output_dir is not None:
        spec = spec.model_copy(update={"output_dir": args.output_dir})
    if args.jobs is not None and isinstance(spec, TrainingExperimentSpec):
        spec.train.enforce.jobs = args.jobs
    result = get_experiment_service().run_experiment(spec, args.seed)
    print_summary(result)
    return EXIT_SUCCESS if result.passed else EXIT_METHOD_FAILURE
