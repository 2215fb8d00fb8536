from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from affine_fence.schemas.enforce_schemas import BiasOnlyResult, EnforcementReport
from affine_fence.schemas.region_schemas import EqualityConstraint, InequalityConstraint
from affine_fence.schemas.trainer_schemas import TrainConfig, TrainReport
from affine_fence.schemas.verifier_schemas import AffinityReport, HullReport

BENCH_HEADER = [
    "N_Regions",
    "Total_Vertices",
    "Net_Width",
    "Num_Hidden_L",
    "T_Assign_s",
    "T_Enforce_s",
]


class BoxConfig(BaseModel):
    lo: list[float] = Field(..., min_length=1)
    hi: list[float] = Field(..., min_length=1)


class RegionConfig(BaseModel):
    """One region in a config file: exactly one of vertices, interval or box."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    id: str
    vertices: list[list[float]] | None = None
    interval: tuple[float, float] | None = None
    box: BoxConfig | None = None
    equality: EqualityConstraint | None = None
    inequality: InequalityConstraint | None = None

    @model_validator(mode="after")
    def check_geometry(self):
        given = [
            name
            for name in ("vertices", "interval", "box")
            if getattr(self, name) is not None
        ]
        if len(given) != 1:
            raise ValueError(
                f"exactly one of vertices, interval, box is required; got {given or 'none'}."
            )
        return self


class DatasetConfig(BaseModel):
    n: int = Field(512, ge=2)
    n_per_class: int = Field(200, ge=10)
    noise: float = Field(0.0, ge=0.0)
    test_n: int = Field(400, ge=2)


class ArchitectureConfig(BaseModel):
    hidden: list[int] = Field(..., min_length=1)
    activation_slope: float = Field(0.01, ge=0.0, lt=1.0)


class BenchConfig(BaseModel):
    widths: list[int] = Field([64, 128, 256], min_length=1)
    depths: list[int] = Field([1, 2, 3], min_length=1)
    region_counts: list[int] = Field([2, 4, 8], min_length=1)
    input_dim: int = Field(4, ge=1, le=8)


class TrainingExperimentSpec(BaseModel):
    name: Literal["sin_regression", "spiral_classification", "nonconvex_saddle"]
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    architecture: ArchitectureConfig
    train: TrainConfig = Field(default_factory=TrainConfig)
    regions: list[RegionConfig] = Field(..., min_length=1)
    output_dir: str = "runs"
    verify_samples: int | None = Field(None, ge=1)
    grid_points: int = Field(200, ge=2)
    seed: int | None = None


class DemoExperimentSpec(BaseModel):
    name: Literal["bias_only_demo", "hull_demo"]
    margin: float = Field(0.0, ge=0.0)
    output_dir: str = "runs"
    verify_samples: int | None = Field(None, ge=1)
    seed: int | None = None


class BenchExperimentSpec(BaseModel):
    name: Literal["bench"]
    bench: BenchConfig = Field(default_factory=BenchConfig)
    output_dir: str = "runs"
    seed: int | None = None


ExperimentSpec = Annotated[
    Union[TrainingExperimentSpec, DemoExperimentSpec, BenchExperimentSpec],
    Field(discriminator="name"),
]

experiment_spec_adapter = TypeAdapter(ExperimentSpec)


class BenchRow(BaseModel):
    n_regions: int
    total_vertices: int
    net_width: int
    num_hidden_layers: int
    t_assign: float = Field(..., ge=0.0)
    t_enforce: float = Field(..., ge=0.0)
    status: str = "ok"
    error: str | None = None

    def csv_row(self) -> dict:
        return dict(
            zip(
                BENCH_HEADER,
                [
                    self.n_regions,
                    self.total_vertices,
                    self.net_width,
                    self.num_hidden_layers,
                    self.t_assign,
                    self.t_enforce,
                ],
            )
        )


class HullDemoResult(BaseModel):
    shared: HullReport
    unique: HullReport


class BiasOnlyDemoResult(BaseModel):
    bias_only: BiasOnlyResult
    enforcement: EnforcementReport
    margin_after_enforcement: float


class ExperimentResult(BaseModel):
    name: str
    passed: bool
    seed: int
    final_violation: float | None = None
    baseline_violation: float | None = None
    baseline_metric: float | None = None
    final_metric: float | None = None
    metric_name: str | None = None
    patterns_distinct: bool | None = None
    certifications: list[AffinityReport] = []
    train_report: TrainReport | None = None
    bias_only_demo: BiasOnlyDemoResult | None = None
    hull_demo: HullDemoResult | None = None
    bench_rows: list[BenchRow] | None = None
    artifacts: list[str] = []
