import itertools
import time
from pathlib import Path

import numpy as np

from affine_fence.core.config import config
from affine_fence.core.logger import logger
from affine_fence.schemas.enforce_schemas import EnforceConfig
from affine_fence.schemas.experiment_schemas import (
    BenchExperimentSpec,
    BenchRow,
    BiasOnlyDemoResult,
    DemoExperimentSpec,
    ExperimentResult,
    ExperimentSpec,
    HullDemoResult,
    RegionConfig,
    TrainingExperimentSpec,
)
from affine_fence.schemas.network_schemas import LayerParams, MlpNetwork
from affine_fence.schemas.region_schemas import (
    EqualityConstraint,
    InequalityConstraint,
    RegionSet,
)
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.schemas.trainer_schemas import Dataset, SignMethodEnum, TaskKindEnum
from affine_fence.services.enforce import EnforceService
from affine_fence.services.exceptions import (
    BaseError,
    EnforcementFailedError,
    ExperimentStageError,
    InvalidValueError,
)
from affine_fence.services.network import NetworkService
from affine_fence.services.regions import MACHINE_GAP, RegionService
from affine_fence.services.signs import SignService
from affine_fence.services.trainer import TrainerService
from affine_fence.services.verifier import VerifierService
from affine_fence.storage.csv_writer import write_bench, write_curves, write_predictions
from affine_fence.storage.repo.experiment import ExperimentResultRepo
from affine_fence.storage.repo.model import ModelRepo

SPIRAL_SQUARE_SIDE = 0.3
SPIRAL_SQUARE_CENTER = 2.0 / 3.0
BENCH_BOX_SIDE = 0.5
BENCH_CENTER_RANGE = 5.0
HULL_DEMO_HIDDEN = [8, 8]
SIGN_SLACK = -1e-8


def get_experiment_service() -> "ExperimentService":
    network_service = NetworkService()
    region_service = RegionService()
    sign_service = SignService(network_service)
    enforce_service = EnforceService(network_service)
    return ExperimentService(
        network_service,
        region_service,
        sign_service,
        enforce_service,
        TrainerService(network_service, region_service, sign_service, enforce_service),
        VerifierService(network_service, region_service),
    )


class ExperimentService:
    """Represents a service for the desk-scale experiments, demos and the
    enforcement benchmark."""

    def __init__(
        self,
        network_service: NetworkService,
        region_service: RegionService,
        sign_service: SignService,
        enforce_service: EnforceService,
        trainer_service: TrainerService,
        verifier_service: VerifierService,
    ) -> None:
        self._network_service = network_service
        self._region_service = region_service
        self._sign_service = sign_service
        self._enforce_service = enforce_service
        self._trainer_service = trainer_service
        self._verifier_service = verifier_service

    @staticmethod
    def gen_sin_dataset(n: int) -> Dataset:
        """Deterministic uniform grid on [0, 2 pi] with y = sin x."""
        if n < 2:
            raise InvalidValueError("n", n, "at least 2 points are needed")
        x = np.linspace(0.0, 2.0 * np.pi, n)
        return Dataset(inputs=x[:, None], targets=np.sin(x)[:, None])

    @staticmethod
    def sin_regions() -> RegionSet:
        return RegionSet(
            regions=[
                RegionService.make_region(
                    "R1",
                    RegionService.make_interval(np.pi / 3, 3 * np.pi / 4),
                    equality=EqualityConstraint(e=[[1.0]], f=[np.sin(np.pi / 3)]),
                ),
                RegionService.make_region(
                    "R2",
                    RegionService.make_interval(np.pi + np.pi / 3, np.pi + 3 * np.pi / 4),
                    inequality=InequalityConstraint(c=[[1.0]], d=[-0.5]),
                ),
            ]
        )

    @staticmethod
    def gen_spiral_dataset(n_per_class: int, noise: float = 0.0, seed: int = 0) -> Dataset:
        """Two interleaved spirals, class 1 being class 0 rotated by pi.

        Angles run over (0, 3 pi] with radius proportional to the angle; the
        noisy coordinates are scaled into [-1, 1]^2.
        """
        if n_per_class < 10:
            raise InvalidValueError("n_per_class", n_per_class, "at least 10 are needed")
        if noise < 0:
            raise InvalidValueError("noise", noise, "must be non-negative")
        rng = np.random.default_rng(seed)
        t = np.linspace(0.0, 3.0 * np.pi, n_per_class + 1)[1:]
        radius = t / (3.0 * np.pi)
        arm = np.column_stack([radius * np.cos(t), radius * np.sin(t)])
        points = np.vstack([arm, -arm])
        points = points + rng.normal(scale=noise, size=points.shape) if noise > 0 else points
        points = points / np.max(np.abs(points))
        labels = np.concatenate([np.zeros(n_per_class), np.ones(n_per_class)])
        return Dataset(
            inputs=points,
            targets=labels[:, None],
            task_kind=TaskKindEnum.CLASSIFICATION_BCE,
        )

    @staticmethod
    def spiral_regions() -> RegionSet:
        """Squares on the two arms where they cross the positive and negative x-axis."""
        half = SPIRAL_SQUARE_SIDE / 2.0
        regions = []
        for region_id, center_x in (("S0", SPIRAL_SQUARE_CENTER), ("S1", -SPIRAL_SQUARE_CENTER)):
            regions.append(
                RegionService.make_region(
                    region_id,
                    RegionService.make_box([center_x - half, -half], [center_x + half, half]),
                )
            )
        return RegionSet(regions=regions)

    @staticmethod
    def gen_saddle_dataset(n: int, seed: int = 0) -> Dataset:
        if n < 4:
            raise InvalidValueError("n", n, "at least 4 points are needed")
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1.0, 1.0, size=(n, 2))
        return Dataset(inputs=x, targets=(x[:, 0] ** 2 - x[:, 1] ** 2)[:, None])

    @staticmethod
    def saddle_regions(gap: float = MACHINE_GAP) -> RegionSet:
        """Two boxes abutting across x1 = 0, both held at output 0."""
        left, right = RegionService.make_abutting_boxes([-0.5, -0.5], [0.5, 0.5], 0, gap)
        plateau = EqualityConstraint(e=[[1.0]], f=[0.0])
        return RegionSet(
            regions=[
                RegionService.make_region("left", left, equality=plateau),
                RegionService.make_region("right", right, equality=plateau.model_copy(deep=True)),
            ]
        )

    @staticmethod
    def build_regions(region_configs: list[RegionConfig]) -> RegionSet:
        regions = []
        for region_config in region_configs:
            if region_config.interval is not None:
                vertices = RegionService.make_interval(*region_config.interval)
            elif region_config.box is not None:
                vertices = RegionService.make_box(region_config.box.lo, region_config.box.hi)
            else:
                vertices = np.asarray(region_config.vertices, dtype=np.float64)
            regions.append(
                RegionService.make_region(
                    region_config.id,
                    vertices,
                    equality=region_config.equality,
                    inequality=region_config.inequality,
                )
            )
        return RegionSet(regions=regions)

    @staticmethod
    def _resolve_seed(spec_seed: int | None, seed: int | None) -> int:
        if seed is not None:
            return seed
        return spec_seed if spec_seed is not None else config.seed

    def _datasets(self, spec: TrainingExperimentSpec, seed: int) -> tuple[Dataset, Dataset]:
        dataset = spec.dataset
        if spec.name == "sin_regression":
            return self.gen_sin_dataset(dataset.n), self.gen_sin_dataset(dataset.test_n)
        if spec.name == "spiral_classification":
            return self.gen_spiral_dataset(
                dataset.n_per_class, dataset.noise, seed
            ), self.gen_spiral_dataset(max(10, dataset.test_n // 2), 0.0, seed + 1)
        return self.gen_saddle_dataset(dataset.n, seed), self.gen_saddle_dataset(
            dataset.test_n, seed + 1
        )

    def _task_metric(
        self, net: MlpNetwork, test: Dataset, regions: RegionSet
    ) -> tuple[str, float]:
        if test.task_kind == TaskKindEnum.CLASSIFICATION_BCE:
            return "accuracy", self._trainer_service.accuracy(net, test)
        return "mse_outside_regions", self._trainer_service.mse_outside_regions(
            net, test, regions
        )

    @staticmethod
    def _prediction_grid(inputs: np.ndarray, grid_points: int) -> np.ndarray:
        axes = [
            np.linspace(low, high, grid_points)
            for low, high in zip(inputs.min(axis=0), inputs.max(axis=0))
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([axis.reshape(-1) for axis in mesh])

    @staticmethod
    def _stage(stage: str, action, *args, **kwargs):
        try:
            return action(*args, **kwargs)
        except BaseError as exc:
            raise ExperimentStageError(stage, exc) from exc

    def run_training_experiment(
        self, spec: TrainingExperimentSpec, seed: int | None = None
    ) -> ExperimentResult:
        """Pretrain, record the unconstrained baseline, fine-tune, certify, save.

        Args:
            spec (TrainingExperimentSpec): The experiment.
            seed (int | None, optional): Overrides the seed of the spec.

        Raises:
            ExperimentStageError: If a stage fails; names the stage.

        Returns:
            ExperimentResult: Metrics, certificates and artifact paths.
        """
        seed = self._resolve_seed(spec.seed, seed)
        out = Path(spec.output_dir)
        regions = self._stage("setup", self.build_regions, spec.regions)
        data, test = self._datasets(spec, seed)
        cfg = spec.train.model_copy(update={"seed": seed})
        dims = [data.inputs.shape[1], *spec.architecture.hidden, data.targets.shape[1]]
        logger.info(f"Running {spec.name} with dims {dims} and seed {seed}")

        net = self._stage(
            "setup",
            self._network_service.init_network,
            dims,
            spec.architecture.activation_slope,
            seed,
        )
        pretrained, pretrain_report = self._stage(
            "pretrain", self._trainer_service.pretrain, net, data, cfg
        )
        baseline_violation = self._trainer_service.measure_violation(pretrained, regions)
        metric_name, baseline_metric = self._task_metric(pretrained, test, regions)
        logger.info(
            f"Baseline: violation {baseline_violation:.4e}, {metric_name} {baseline_metric:.4e}"
        )

        tuned, report = self._stage(
            "fine_tune", self._trainer_service.fine_tune, pretrained, data, regions, cfg
        )
        report.pretrain_time = pretrain_report.wall_time
        final_violation = self._trainer_service.measure_violation(tuned, regions)
        _, final_metric = self._task_metric(tuned, test, regions)

        n_samples = spec.verify_samples or config.verify_samples
        certifications = [
            self._stage(
                "certify",
                self._verifier_service.certify_region,
                tuned,
                region,
                report.sign_map.pattern(region.id),
                max(n_samples, region.num_vertices + region.dim + 1),
                seed,
            )
            for region in regions.regions
        ]
        distinct = self._verifier_service.certify_distinct(report.sign_map)
        passed = (
            final_violation <= cfg.violation_tolerance
            and distinct
            and all(certificate.certified for certificate in certifications)
        )

        grid = self._prediction_grid(data.inputs, spec.grid_points)
        artifacts = [
            ModelRepo.save_network(tuned, out / "model.json", report.sign_map, regions),
            write_curves(out / "curves.csv", report),
            write_predictions(
                out / "predictions.csv", grid, self._network_service.forward(tuned, grid)
            ),
        ]
        result = ExperimentResult(
            name=spec.name,
            passed=passed,
            seed=seed,
            final_violation=final_violation,
            baseline_violation=baseline_violation,
            baseline_metric=baseline_metric,
            final_metric=final_metric,
            metric_name=metric_name,
            patterns_distinct=distinct,
            certifications=certifications,
            train_report=report,
            artifacts=[str(path) for path in artifacts] + [str(out / "report.json")],
        )
        ExperimentResultRepo.save(result, out / "report.json")
        logger.info(
            f"{spec.name}: V {final_violation:.4e}, {metric_name} {final_metric:.4e}, "
            f"passed={passed}"
        )
        return result

    @staticmethod
    def _scalar_network(weight: float, bias: float) -> MlpNetwork:
        return MlpNetwork(
            layers=[
                LayerParams(weights=[[weight]], biases=[bias]),
                LayerParams(weights=[[1.0]], biases=[0.0]),
            ],
            activation_slope=0.0,
        )

    def bias_only_demo(self, spec: DemoExperimentSpec) -> ExperimentResult:
        """One neuron w = 1, b = 0 with [0, 1] on its positive side and [2, 3] on its
        negative side.

        Moving the bias alone needs b >= 0 and b <= -3 at once; adjusting the
        weight as well succeeds.
        """
        net = self._scalar_network(1.0, 0.0)
        regions = RegionSet(
            regions=[
                RegionService.make_region("R1", RegionService.make_interval(0.0, 1.0)),
                RegionService.make_region("R2", RegionService.make_interval(2.0, 3.0)),
            ]
        )
        sign_map = SignMap({"R1": [[1]], "R2": [[-1]]})
        bias_only = self._enforce_service.enforce_bias_only(net, regions, sign_map, 0.0)
        enforced, enforcement = self._stage(
            "enforce",
            self._enforce_service.enforce_signs,
            net,
            regions,
            sign_map,
            EnforceConfig(margin=0.0),
        )
        margin = self._enforce_service.verify_margins(enforced, regions, sign_map, 0.0)
        if not bias_only.feasible:
            logger.info(
                f"Bias-only bounds: b >= {bias_only.bounds.lower}, "
                f"b <= {bias_only.bounds.upper}"
            )
        out = Path(spec.output_dir)
        result = ExperimentResult(
            name=spec.name,
            passed=(not bias_only.feasible)
            and enforcement.succeeded
            and margin >= SIGN_SLACK,
            seed=0,
            bias_only_demo=BiasOnlyDemoResult(
                bias_only=bias_only,
                enforcement=enforcement,
                margin_after_enforcement=margin,
            ),
            artifacts=[str(out / "report.json")],
        )
        ExperimentResultRepo.save(result, out / "report.json")
        return result

    def hull_demo(self, spec: DemoExperimentSpec, seed: int | None = None) -> ExperimentResult:
        """Contrast one shared pattern with unique patterns on two intervals."""
        seed = self._resolve_seed(spec.seed, seed)
        regions = RegionSet(
            regions=[
                RegionService.make_region("A", RegionService.make_interval(-2.0, -1.0)),
                RegionService.make_region("B", RegionService.make_interval(1.0, 2.0)),
            ]
        )
        net = self._network_service.init_network([1, *HULL_DEMO_HIDDEN, 1], seed=seed)
        enforce_config = EnforceConfig(margin=spec.margin)
        n_samples = spec.verify_samples or config.verify_samples

        shared_pattern = self._sign_service.police_pattern(net, regions)
        shared_map = SignMap(
            {region_id: [signs.copy() for signs in shared_pattern] for region_id in regions.ids}
        )
        shared_net, _ = self._stage(
            "enforce_shared",
            self._enforce_or_raise,
            net,
            regions,
            shared_map,
            enforce_config,
        )
        preacts = self._sign_service.propagate_vertices(net, regions)
        unique_map = self._sign_service.ensure_unique(
            self._sign_service.assign(preacts, SignMethodEnum.MEAN), preacts
        )
        unique_net, _ = self._stage(
            "enforce_unique",
            self._enforce_or_raise,
            net,
            regions,
            unique_map,
            enforce_config,
        )

        shared = self._verifier_service.hull_check(
            shared_net, regions[0], regions[1], n_samples, seed
        )
        unique = self._verifier_service.hull_check(
            unique_net, regions[0], regions[1], n_samples, seed
        )
        out = Path(spec.output_dir)
        result = ExperimentResult(
            name=spec.name,
            passed=shared.hull_pattern_constant and not unique.hull_pattern_constant,
            seed=seed,
            patterns_distinct=SignService.patterns_distinct(unique_map),
            hull_demo=HullDemoResult(shared=shared, unique=unique),
            artifacts=[str(out / "report.json")],
        )
        ExperimentResultRepo.save(result, out / "report.json")
        logger.info(
            f"Hull demo: shared constant={shared.hull_pattern_constant}, "
            f"unique constant={unique.hull_pattern_constant}"
        )
        return result

    def _enforce_or_raise(
        self,
        net: MlpNetwork,
        regions: RegionSet,
        sign_map: SignMap,
        cfg: EnforceConfig,
    ):
        enforced, report = self._enforce_service.enforce_signs(net, regions, sign_map, cfg)
        if not report.succeeded:
            raise EnforcementFailedError(report)
        return enforced, report

    def _bench_regions(self, n_regions: int, input_dim: int, seed: int) -> RegionSet:
        rng = np.random.default_rng([seed, n_regions])
        centers: list[np.ndarray] = []
        while len(centers) < n_regions:
            candidate = rng.uniform(-BENCH_CENTER_RANGE, BENCH_CENTER_RANGE, size=input_dim)
            if all(np.max(np.abs(candidate - other)) > 2 * BENCH_BOX_SIDE for other in centers):
                centers.append(candidate)
        half = BENCH_BOX_SIDE / 2.0
        return RegionSet(
            regions=[
                RegionService.make_region(
                    f"B{index}", RegionService.make_box(center - half, center + half)
                )
                for index, center in enumerate(centers)
            ]
        )

    def run_bench(
        self,
        widths: list[int],
        depths: list[int],
        region_counts: list[int],
        seed: int = 0,
        input_dim: int = 4,
        jobs: int | None = None,
    ) -> list[BenchRow]:
        """Time sign assignment and enforcement over an architecture grid.

        Each region is an axis-aligned box, so ``input_dim`` = 4 gives 16
        vertices per region. Enforcement failures are recorded in the row.

        Raises:
            InvalidValueError: If any of the lists is empty.

        Returns:
            list[BenchRow]: One row per (regions, width, depth) combination.
        """
        for what, values in (
            ("widths", widths),
            ("depths", depths),
            ("region_counts", region_counts),
        ):
            if not values:
                raise InvalidValueError(what, values, "must not be empty")
        enforce_config = EnforceConfig() if jobs is None else EnforceConfig(jobs=jobs)
        rows = []
        for n_regions, width, depth in itertools.product(region_counts, widths, depths):
            regions = self._bench_regions(n_regions, input_dim, seed)
            net = self._network_service.init_network(
                [input_dim, *([width] * depth), 1], seed=seed
            )
            status, error = "ok", None
            start = time.perf_counter()
            t_enforce = 0.0
            try:
                preacts = self._sign_service.propagate_vertices(net, regions)
                sign_map = self._sign_service.ensure_unique(
                    self._sign_service.assign(preacts, SignMethodEnum.MEAN), preacts
                )
                t_assign = time.perf_counter() - start
                start = time.perf_counter()
                _, report = self._enforce_service.enforce_signs(
                    net, regions, sign_map, enforce_config
                )
                t_enforce = time.perf_counter() - start
                if not report.succeeded:
                    status = "enforce_failed"
                    error = f"{len(report.qp_failures)} neuron program(s) failed"
            except BaseError as exc:
                t_assign = time.perf_counter() - start
                status, error = "error", exc.errors()
            row = BenchRow(
                n_regions=n_regions,
                total_vertices=sum(region.num_vertices for region in regions.regions),
                net_width=width,
                num_hidden_layers=depth,
                t_assign=t_assign,
                t_enforce=t_enforce,
                status=status,
                error=error,
            )
            logger.info(
                f"Bench {n_regions} regions, width {width}, depth {depth}: "
                f"assign {row.t_assign:.4f}s, enforce {row.t_enforce:.4f}s ({status})"
            )
            rows.append(row)
        return rows

    def run_bench_experiment(
        self, spec: BenchExperimentSpec, seed: int | None = None, jobs: int | None = None
    ) -> ExperimentResult:
        seed = self._resolve_seed(spec.seed, seed)
        bench = spec.bench
        rows = self.run_bench(
            bench.widths, bench.depths, bench.region_counts, seed, bench.input_dim, jobs
        )
        path = write_bench(Path(spec.output_dir) / "bench.csv", rows)
        return ExperimentResult(
            name=spec.name, passed=True, seed=seed, bench_rows=rows, artifacts=[str(path)]
        )

    def run_experiment(self, spec: ExperimentSpec, seed: int | None = None) -> ExperimentResult:
        if isinstance(spec, TrainingExperimentSpec):
            return self.run_training_experiment(spec, seed)
        if isinstance(spec, BenchExperimentSpec):
            return self.run_bench_experiment(spec, seed)
        if spec.name == "bias_only_demo":
            return self.bias_only_demo(spec)
        return self.hull_demo(spec, seed)
