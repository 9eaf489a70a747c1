"""
Experiment sweeps over a small seeded suite

Two 8 x 8 suite images with 3 x 3 kernels keep every cell to a few solver
steps.
"""

import csv
import json
import math

import numpy as np
import pytest

from src.modules.evaluation.sweep_service import (
    CSV_COLUMNS,
    SUMMARY_NAME,
    SWEEP_CSV,
    SweepService,
    SweepSpec,
    run_sweep,
)
from src.modules.generators import layers as L
from src.modules.generators.layers import build_network
from src.shared.errors import ConfigError, FormatError
from src.shared.run_log import RESULT_NAME
from tests.conftest import save_generator

SUITE = {"kind": "test", "count": 2, "image_size": 8, "channels": 1, "kernel_size": 3,
         "trajectory": {"length_min": 1.0, "length_max": 2.0}, "noise_sigma": 0.01}
FAST = {"gen": {"steps": 5, "restarts": 2}, "naive": {"steps": 5, "restarts": 1},
        "hybrid": {"steps": 5, "restarts": 1}, "untrained": {"init_steps": 2, "steps": 2}}


def read_rows(path):
    with open(path) as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.DictReader(lines))


def without_seconds(rows):
    return [{key: value for key, value in row.items() if key != "seconds"} for row in rows]


@pytest.fixture
def make_spec(image_model_path, blur_model_path):
    def make(**overrides):
        options = {"kind": "noise", "grid": [0.0, 0.05], "suite": SUITE, "algorithms": ["gen", "naive"],
                   "image_model": str(image_model_path), "blur_model": str(blur_model_path),
                   "config": FAST, "seed": 3}
        options.update(overrides)
        return SweepSpec.from_options(**options)
    return make


class TestSweepOutputs:

    def test_rows_and_files(self, make_spec, tmp_path):
        outcome = run_sweep(make_spec(), tmp_path / "sweep")
        rows = read_rows(tmp_path / "sweep" / SWEEP_CSV)
        assert len(rows) == 2 * 2 * 2
        assert tuple(rows[0].keys()) == CSV_COLUMNS
        assert (tmp_path / "sweep" / SWEEP_CSV).read_text().startswith("# generated ")
        assert json.loads((tmp_path / "sweep" / RESULT_NAME).read_text())["status"] == "completed"
        assert outcome.csv_path == tmp_path / "sweep" / SWEEP_CSV

    def test_summary_matches_csv(self, make_spec, tmp_path):
        run_sweep(make_spec(), tmp_path)
        rows = read_rows(tmp_path / SWEEP_CSV)
        summary = json.loads((tmp_path / SUMMARY_NAME).read_text())
        for entry in summary:
            group = [float(row["psnr_db"]) for row in rows
                     if float(row["grid_value"]) == entry["grid_value"] and row["algorithm"] == entry["algorithm"]]
            assert entry["images"] == len(group) == 2
            assert entry["psnr_db"]["mean"] == pytest.approx(np.mean(group), rel=1e-12)

    def test_reruns_match_except_timing(self, make_spec, tmp_path):
        run_sweep(make_spec(), tmp_path / "a", jobs=1)
        run_sweep(make_spec(), tmp_path / "b", jobs=3)
        assert without_seconds(read_rows(tmp_path / "a" / SWEEP_CSV)) == \
            without_seconds(read_rows(tmp_path / "b" / SWEEP_CSV))

    def test_range_error_only_for_range_suites(self, make_spec, tmp_path):
        rows = run_sweep(make_spec(), tmp_path).rows
        assert all(math.isnan(row["range_error"]) for row in rows)


class TestSuite:

    def test_images_are_reused_across_grid_values(self, make_spec):
        service = SweepService(make_spec())
        service.validate()
        quiet, noisy = service.suite_image(1, 0.0), service.suite_image(1, 0.05)
        assert np.array_equal(quiet.truth, noisy.truth)
        assert np.array_equal(quiet.kernel, noisy.kernel)
        assert not np.array_equal(quiet.y, noisy.y)

    def test_images_differ_from_each_other(self, make_spec):
        service = SweepService(make_spec())
        service.validate()
        assert not np.array_equal(service.suite_image(0, 0.0).truth, service.suite_image(1, 0.0).truth)

    def test_sample_suite_stays_in_range(self, make_spec, image_handle):
        service = SweepService(make_spec(suite={**SUITE, "kind": "sample"}))
        service.validate()
        item = service.suite_image(0, 0.0)
        assert item.test_image is None
        assert item.truth.shape == image_handle.output_shape

    def test_range_suite_records_range_error(self, make_spec, tmp_path):
        suite = {**SUITE, "kind": "range", "count": 1, "projection": {"steps": 3, "restarts": 1}}
        outcome = run_sweep(make_spec(suite=suite, algorithms=["gen"], grid=[0.01]), tmp_path)
        assert all(row["range_error"] >= 0 for row in outcome.rows)
        assert "range_error" in outcome.summary[0]


class TestSweepKinds:

    def test_more_restarts_never_hurt(self, make_spec, tmp_path):
        outcome = run_sweep(make_spec(kind="restarts", grid=[1, 2, 3], algorithms=["gen"]), tmp_path)
        for image_id in (0, 1):
            losses = [row["measurement_loss"] for row in outcome.rows if row["image_id"] == image_id]
            assert [row["grid_value"] for row in outcome.rows if row["image_id"] == image_id] == [1, 2, 3]
            assert all(later <= earlier for earlier, later in zip(losses, losses[1:]))

    def test_blur_size(self, make_spec, tmp_path):
        service = SweepService(make_spec(kind="blur_size", grid=[1.0, 2.0]))
        service.validate()
        assert not np.array_equal(service.suite_image(0, 1.0).kernel, service.suite_image(0, 2.0).kernel)

    def test_latent_dim(self, tmp_path):
        for latent in (3, 4):
            spec = build_network([L.fc(64), L.reshape(1, 8, 8), L.sigmoid()], input_dim=latent)
            save_generator(spec, latent, tmp_path / "models" / f"image_{latent}.gnw")
        spec = SweepSpec.from_options(
            kind="latent_dim", grid=[3, 4], suite={**SUITE, "count": 1}, algorithms=["naive"],
            image_model=str(tmp_path / "models" / "image_{value}.gnw"), config=FAST)
        outcome = run_sweep(spec, tmp_path / "out")
        assert [row["grid_value"] for row in outcome.rows] == [3, 4]

    def test_untrained_and_hybrid(self, make_spec, tmp_path):
        spec = make_spec(grid=[0.01], algorithms=["hybrid", "untrained"], untrained_latent_dim=4, untrained_width=2)
        outcome = run_sweep(spec, tmp_path)
        assert [row["algorithm"] for row in outcome.rows] == ["hybrid", "untrained"] * 2


class TestValidation:

    def test_missing_model_fails_before_running(self, make_spec, tmp_path):
        spec = make_spec(blur_model=str(tmp_path / "absent.gnw"))
        with pytest.raises(ConfigError):
            run_sweep(spec, tmp_path / "out")
        assert not (tmp_path / "out" / SWEEP_CSV).exists()
        assert json.loads((tmp_path / "out" / RESULT_NAME).read_text())["status"] == "failed"

    def test_generator_algorithms_need_an_image_model(self, make_spec):
        with pytest.raises(ConfigError):
            SweepService(make_spec(image_model=None)).validate()

    @pytest.mark.parametrize("overrides", [
        {"grid": []},
        {"grid": [-0.1]},
        {"kind": "restarts", "grid": [1.5]},
        {"kind": "blur_size", "grid": [5.0]},
        {"kind": "latent_dim", "grid": [4]},
        {"algorithms": ["wiener"]},
        {"suite": {**SUITE, "kernel_size": 4}},
    ])
    def test_invalid_specs(self, make_spec, overrides):
        with pytest.raises(ConfigError):
            make_spec(**overrides)

    def test_spec_files(self, tmp_path):
        with pytest.raises(ConfigError):
            SweepSpec.from_file(tmp_path / "absent.json")
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(FormatError):
            SweepSpec.from_file(tmp_path / "bad.json")
        (tmp_path / "good.json").write_text(json.dumps({"kind": "noise", "grid": [0.01]}))
        assert SweepSpec.from_file(tmp_path / "good.json").grid == [0.01]
