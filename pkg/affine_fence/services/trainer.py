import time

import numpy as np
from scipy.special import expit

from affine_fence.core.logger import logger
from affine_fence.schemas.network_schemas import GradientSet, MlpNetwork
from affine_fence.schemas.region_schemas import RegionSet
from affine_fence.schemas.sign_schemas import SignMap
from affine_fence.schemas.trainer_schemas import (
    Dataset,
    PretrainReport,
    StopReasonEnum,
    TaskKindEnum,
    TrainConfig,
    TrainReport,
)
from affine_fence.services.enforce import EnforceService
from affine_fence.services.exceptions import (
    EnforcementFailedError,
    InvalidValueError,
    NonFiniteLossError,
)
from affine_fence.services.network import NetworkService
from affine_fence.services.optimizer import AdamOptimizer
from affine_fence.services.regions import RegionService
from affine_fence.services.signs import SignService

PRETRAIN_STAGE = 0
FINETUNE_STAGE = 1


def get_trainer_service() -> "TrainerService":
    network_service = NetworkService()
    return TrainerService(
        network_service,
        RegionService(),
        SignService(network_service),
        EnforceService(network_service),
    )


class TrainerService:
    """Represents a service for pretraining and constrained fine-tuning."""

    def __init__(
        self,
        network_service: NetworkService,
        region_service: RegionService,
        sign_service: SignService,
        enforce_service: EnforceService,
    ) -> None:
        self._network_service = network_service
        self._region_service = region_service
        self._sign_service = sign_service
        self._enforce_service = enforce_service

    def task_loss_and_grad(
        self,
        net: MlpNetwork,
        inputs: np.ndarray,
        targets: np.ndarray,
        task_kind: TaskKindEnum,
    ) -> tuple[float, GradientSet]:
        """Mean task loss over a batch and its parameter gradient.

        Regression uses the squared error averaged over every output entry;
        classification treats the outputs as logits of a binary cross-entropy.
        """
        outputs, trace = self._network_service.forward_trace(net, inputs)
        count = outputs.size
        if task_kind == TaskKindEnum.CLASSIFICATION_BCE:
            loss = float(np.mean(np.logaddexp(0.0, outputs) - targets * outputs))
            output_grad = (expit(outputs) - targets) / count
        else:
            residual = outputs - targets
            loss = float(np.mean(residual**2))
            output_grad = 2.0 * residual / count
        return loss, self._network_service.backward(net, trace, output_grad)

    def evaluate_task_loss(self, net: MlpNetwork, data: Dataset) -> float:
        outputs = self._network_service.forward(net, data.inputs)
        if data.task_kind == TaskKindEnum.CLASSIFICATION_BCE:
            return float(np.mean(np.logaddexp(0.0, outputs) - data.targets * outputs))
        return float(np.mean((outputs - data.targets) ** 2))

    def constraint_penalty_grad(
        self, net: MlpNetwork, regions: RegionSet
    ) -> tuple[float, GradientSet]:
        """Squared equality residuals plus squared inequality hinges at every vertex.

        Args:
            net (MlpNetwork): The network.
            regions (RegionSet): Regions; those without constraints add nothing.

        Returns:
            tuple[float, GradientSet]: Penalty value and its parameter gradient.
        """
        total = 0.0
        grads = self._network_service.zero_gradients(net)
        for region in regions.regions:
            if not region.has_constraints:
                continue
            outputs, trace = self._network_service.forward_trace(net, region.vertices)
            output_grad = np.zeros_like(outputs)
            if region.equality is not None:
                residual = outputs @ region.equality.e.T - region.equality.f
                total += float(np.sum(residual**2))
                output_grad += 2.0 * residual @ region.equality.e
            if region.inequality is not None:
                hinge = np.maximum(outputs @ region.inequality.c.T - region.inequality.d, 0.0)
                total += float(np.sum(hinge**2))
                output_grad += 2.0 * hinge @ region.inequality.c
            region_grads = self._network_service.backward(net, trace, output_grad)
            grads = grads.scaled_sum(region_grads, 1.0)
        return total, grads

    def constraint_penalty(self, net: MlpNetwork, regions: RegionSet) -> float:
        value, _ = self.constraint_penalty_grad(net, regions)
        return value

    def measure_violation(self, net: MlpNetwork, regions: RegionSet) -> float:
        worst = 0.0
        for region in regions.regions:
            if not region.has_constraints:
                continue
            outputs = self._network_service.forward(net, region.vertices)
            worst = max(worst, self._region_service.vertex_violation(region, outputs))
        return worst

    @staticmethod
    def balanced_loss(avg_task_loss: float, violation: float) -> float:
        if avg_task_loss < 0:
            raise InvalidValueError("avg_task_loss", avg_task_loss, "must be non-negative")
        if violation < 0:
            raise InvalidValueError("violation", violation, "must be non-negative")
        return float(np.sqrt(avg_task_loss * (1.0 + violation)))

    def filter_equality_regions(self, data: Dataset, regions: RegionSet) -> Dataset:
        """Drop samples inside any equality-constrained region (boundaries included)."""
        inside = np.zeros(len(data), dtype=bool)
        for region in regions.regions:
            if region.equality is not None:
                inside |= self._region_service.contains(region, data.inputs)
        if not inside.any():
            return data
        logger.debug(f"Filtered {int(inside.sum())} samples inside equality regions")
        return data.subset(~inside)

    def mse_outside_regions(self, net: MlpNetwork, data: Dataset, regions: RegionSet) -> float:
        inside = np.zeros(len(data), dtype=bool)
        for region in regions.regions:
            inside |= self._region_service.contains(region, data.inputs)
        outside = ~inside
        if not outside.any():
            return 0.0
        outputs = self._network_service.forward(net, data.inputs[outside])
        return float(np.mean((outputs - data.targets[outside]) ** 2))

    def accuracy(self, net: MlpNetwork, data: Dataset) -> float:
        outputs = self._network_service.forward(net, data.inputs)
        return float(np.mean((outputs >= 0.0) == (data.targets >= 0.5)))

    def _run_epoch(
        self,
        net: MlpNetwork,
        optimizer: AdamOptimizer,
        data: Dataset,
        cfg: TrainConfig,
        rng: np.random.Generator,
        stage: str,
        epoch: int,
        regions: RegionSet | None = None,
        penalty_weight: float = 0.0,
    ) -> float:
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(data), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = self.task_loss_and_grad(
                net, data.inputs[batch], data.targets[batch], data.task_kind
            )
            if regions is not None and penalty_weight > 0.0:
                penalty, penalty_grads = self.constraint_penalty_grad(net, regions)
                grads = grads.scaled_sum(penalty_grads, penalty_weight)
                if not np.isfinite(penalty):
                    raise NonFiniteLossError(stage, epoch)
            if not np.isfinite(loss):
                raise NonFiniteLossError(stage, epoch)
            optimizer.step(grads.as_list())
            total += loss * len(batch)
        return total / len(data)

    def pretrain(
        self, net: MlpNetwork, data: Dataset, cfg: TrainConfig
    ) -> tuple[MlpNetwork, PretrainReport]:
        """Minimize the task loss alone on a copy of ``net``.

        Raises:
            InvalidValueError: If the dataset is empty.
            NonFiniteLossError: If a batch loss stops being finite.

        Returns:
            tuple[MlpNetwork, PretrainReport]: Trained copy and loss curve.
        """
        if len(data) == 0:
            raise InvalidValueError("dataset size", 0, "pretraining needs data")
        start = time.perf_counter()
        work = net.clone()
        optimizer = AdamOptimizer(work.parameters(), lr=cfg.learning_rate)
        report = PretrainReport()
        for epoch in range(1, cfg.pretrain_epochs + 1):
            rng = np.random.default_rng([cfg.seed, PRETRAIN_STAGE, epoch])
            loss = self._run_epoch(work, optimizer, data, cfg, rng, "pretrain", epoch)
            report.task_loss.append(loss)
            if epoch % 100 == 0:
                logger.debug(f"Pretrain epoch {epoch}: task loss {loss:.6e}")
        report.wall_time = time.perf_counter() - start
        logger.info(
            f"Pretrained {cfg.pretrain_epochs} epochs in {report.wall_time:.2f}s"
        )
        return work, report

    def initial_sign_map(
        self, net: MlpNetwork, regions: RegionSet, cfg: TrainConfig
    ) -> SignMap:
        preacts = self._sign_service.propagate_vertices(net, regions)
        assigned = self._sign_service.assign(preacts, cfg.sign_method)
        return self._sign_service.ensure_unique(assigned, preacts)

    def _enforce(
        self,
        net: MlpNetwork,
        regions: RegionSet,
        sign_map: SignMap,
        cfg: TrainConfig,
        report: TrainReport,
    ) -> MlpNetwork:
        start = time.perf_counter()
        adjusted, enforcement = self._enforce_service.enforce_signs(
            net, regions, sign_map, cfg.enforce
        )
        report.enforcement_times.append(time.perf_counter() - start)
        report.enforcement = enforcement
        if not enforcement.succeeded:
            raise EnforcementFailedError(enforcement)
        return adjusted

    def fine_tune(
        self,
        net: MlpNetwork,
        data: Dataset,
        regions: RegionSet,
        cfg: TrainConfig,
        sign_map: SignMap | None = None,
    ) -> tuple[MlpNetwork, TrainReport]:
        """Constrained fine-tuning with a frozen sign map.

        The sign map is assigned and made unique once, enforced, and then
        re-enforced after every epoch of penalized task training. The
        penalty weight grows whenever patience runs out while the vertex
        violation is still above tolerance. Each raise also scales the
        learning rate by ``cfg.lr_decay``. The network with the lowest balanced
        loss is returned.

        Args:
            net (MlpNetwork): Pretrained network; never modified.
            data (Dataset): Training data.
            regions (RegionSet): Regions and their output constraints.
            cfg (TrainConfig): Schedule, penalty and enforcement settings.
            sign_map (SignMap | None, optional): Use this map instead of
                assigning one. Defaults to None.

        Raises:
            EnforcementFailedError: If any enforcement pass fails.
            NonFiniteLossError: If a batch loss stops being finite.
            InvalidValueError: If no data survives filtering.

        Returns:
            tuple[MlpNetwork, TrainReport]: Best checkpoint and the history.
        """
        start = time.perf_counter()
        train_data = (
            self.filter_equality_regions(data, regions) if cfg.filter_equality_data else data
        )
        if len(train_data) == 0:
            raise InvalidValueError("dataset size", 0, "fine-tuning needs data")

        work = net.clone()
        if sign_map is None:
            sign_map = self.initial_sign_map(work, regions, cfg)
        report = TrainReport(sign_map=sign_map)
        work.load_parameters(self._enforce(work, regions, sign_map, cfg, report).parameters())

        optimizer = AdamOptimizer(work.parameters(), lr=cfg.effective_finetune_learning_rate)
        penalty_weight = cfg.lambda_init
        best, best_loss, patience = work.clone(), np.inf, 0
        for epoch in range(1, cfg.max_epochs + 1):
            rng = np.random.default_rng([cfg.seed, FINETUNE_STAGE, epoch])
            avg_loss = self._run_epoch(
                work,
                optimizer,
                train_data,
                cfg,
                rng,
                "fine_tune",
                epoch,
                regions,
                penalty_weight,
            )
            work.load_parameters(
                self._enforce(work, regions, sign_map, cfg, report).parameters()
            )
            violation = self.measure_violation(work, regions)
            balanced = self.balanced_loss(avg_loss, violation)
            report.task_loss.append(avg_loss)
            report.violation.append(violation)
            report.lambda_history.append(penalty_weight)
            report.learning_rate.append(optimizer.lr)
            report.balanced_loss.append(balanced)
            report.min_margin.append(
                self._enforce_service.verify_margins(
                    work, regions, sign_map, cfg.enforce.margin
                )
            )
            logger.debug(
                f"Fine-tune epoch {epoch}: loss {avg_loss:.6e}, V {violation:.3e}, "
                f"lambda {penalty_weight:g}"
            )

            if balanced < best_loss:
                best, best_loss, patience = work.clone(), balanced, 0
                report.best_epoch, report.best_balanced_loss = epoch, balanced
            else:
                patience += 1

            if violation <= cfg.violation_tolerance and epoch >= cfg.min_epochs:
                report.stop_reason = StopReasonEnum.TOLERANCE_MET
                break
            if patience >= cfg.patience_threshold:
                if violation > cfg.violation_tolerance and penalty_weight < cfg.lambda_max:
                    penalty_weight = min(penalty_weight * cfg.penalty_multiplier, cfg.lambda_max)
                    optimizer.lr *= cfg.lr_decay
                    patience = 0
                    logger.info(
                        f"Epoch {epoch}: raised penalty weight to {penalty_weight:g}, "
                        f"learning rate now {optimizer.lr:g}"
                    )
                else:
                    report.stop_reason = StopReasonEnum.PATIENCE_EXHAUSTED
                    break
        else:
            report.stop_reason = StopReasonEnum.MAX_EPOCHS

        report.finetune_time = time.perf_counter() - start
        logger.info(
            f"Fine-tuning stopped ({report.stop_reason.value}) after "
            f"{len(report.violation)} epochs; best epoch {report.best_epoch}"
        )
        return best, report
