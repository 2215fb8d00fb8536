import numpy as np
import pytest
from pydantic import ValidationError

from affine_fence.schemas.experiment_schemas import BenchRow
from affine_fence.schemas.model_schemas import ModelFile
from affine_fence.services.exceptions import ArtifactNotFoundError
from affine_fence.storage.csv_writer import write_bench, write_predictions
from affine_fence.storage.repo.model import ModelRepo
from affine_fence.storage.repo.region import RegionRepo
from affine_fence.storage.repo.sign_map import SignMapRepo
from tests import payload


def test_model_round_trip_is_bit_exact(
    network_service, deep_net, box_regions, unique_sign_map, tmp_path
):
    rng = np.random.default_rng(0)
    for param in deep_net.parameters():
        param += rng.standard_normal(param.shape) * 1e-3
    path = ModelRepo.save_network(deep_net, tmp_path / "model.json", unique_sign_map, box_regions)

    model_file = ModelRepo.load(path)
    loaded = model_file.to_network()
    for original, restored in zip(deep_net.parameters(), loaded.parameters()):
        assert np.array_equal(original, restored)
    points = rng.uniform(-2.0, 2.0, size=(1000, 2))
    assert np.array_equal(
        network_service.forward(deep_net, points), network_service.forward(loaded, points)
    )
    assert model_file.dims == [2, 16, 16, 16, 1]
    assert model_file.sign_map.region_ids == unique_sign_map.region_ids
    assert [region.id for region in model_file.regions] == box_regions.ids


def test_model_file_checks_dims(deep_net):
    raw = ModelFile.from_network(deep_net).model_dump()
    raw["dims"] = [2, 16, 1]
    with pytest.raises(ValidationError):
        ModelFile.model_validate(raw)


def test_model_file_checks_version(deep_net):
    raw = ModelFile.from_network(deep_net).model_dump()
    raw["schema_version"] = 99
    with pytest.raises(ValidationError):
        ModelFile.model_validate(raw)


def test_missing_artifact(tmp_path):
    with pytest.raises(ArtifactNotFoundError):
        ModelRepo.load(tmp_path / "absent.json")


def test_region_and_sign_map_round_trip(box_regions, unique_sign_map, tmp_path):
    regions = RegionRepo.load(RegionRepo.save(box_regions, tmp_path / "regions.json"))
    assert regions.ids == box_regions.ids
    for original, restored in zip(box_regions.regions, regions.regions):
        assert np.array_equal(original.vertices, restored.vertices)

    sign_map = SignMapRepo.load(SignMapRepo.save(unique_sign_map, tmp_path / "signs.json"))
    for region_id in unique_sign_map.region_ids:
        assert np.array_equal(
            sign_map.global_pattern(region_id), unique_sign_map.global_pattern(region_id)
        )


def test_bad_sign_entries_are_rejected(tmp_path):
    path = tmp_path / "signs.json"
    path.write_text('{"A": [[1, 0, -1]]}', encoding="utf-8")
    with pytest.raises(ValidationError):
        SignMapRepo.load(path)


def test_write_bench(tmp_path):
    rows = [
        BenchRow(
            n_regions=2,
            total_vertices=32,
            net_width=64,
            num_hidden_layers=1,
            t_assign=0.01,
            t_enforce=0.25,
        )
    ]
    lines = write_bench(tmp_path / "bench.csv", rows).read_text(encoding="utf-8").splitlines()
    assert lines[0] == payload.expected_bench_header
    assert lines[1] == "2,32,64,1,0.01,0.25"


def test_write_predictions(tmp_path):
    path = write_predictions(tmp_path / "p.csv", np.array([[0.0, 1.0]]), np.array([[2.5]]))
    assert path.read_text(encoding="utf-8").splitlines() == ["x0,x1,y0", "0.0,1.0,2.5"]
