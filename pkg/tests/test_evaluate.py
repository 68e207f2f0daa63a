"""Occupancy / existence / separation metrics and the comparison report."""
import csv
import io
import json

import numpy as np
import pytest

from graft_sampler.analytic import AnalyticBackend, unconditional_spec
from graft_sampler.detector import GraftPolicy
from graft_sampler.engine import SamplerConfig, run_batch
from graft_sampler.errors import InvalidArgumentError
from graft_sampler.evaluate import (ABLATION_LABELS, assign_regions, compare_runs,
                                    default_radius, separation_score)

CENTROIDS = np.array([[-2.0, 0.0], [2.0, 0.0]])


class TestAssignRegions:
    def test_mixed_example(self):
        samples = np.array([
            [-2.0, 0.1],   # region 0
            [-1.8, 0.0],   # region 0
            [2.1, -0.1],   # region 1
            [0.0, 0.0],    # between both, outside r
            [9.0, 9.0],    # far away
            [2.0, 0.0],    # exactly region 1
        ])
        out = assign_regions(samples, CENTROIDS, r=0.6)
        assert out.tolist() == [0, 0, 1, -1, -1, 1]

    def test_tie_at_equal_distance_goes_to_lowest_index(self):
        out = assign_regions(np.array([[0.0, 0.0]]), CENTROIDS, r=5.0)
        assert out.tolist() == [0]

    def test_boundary_is_inclusive(self):
        # dyadic distance: |-1.5 - (-2.0)| is exactly 0.5
        out = assign_regions(np.array([[-1.5, 0.0]]), CENTROIDS, r=0.5)
        assert out.tolist() == [0]

    def test_empty_samples(self):
        out = assign_regions(np.empty((0, 2)), CENTROIDS, r=1.0)
        assert out.shape == (0,)

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_bad_radius(self, r):
        with pytest.raises(InvalidArgumentError):
            assign_regions(np.zeros((1, 2)), CENTROIDS, r)

    def test_empty_centroids(self):
        with pytest.raises(InvalidArgumentError):
            assign_regions(np.zeros((1, 2)), np.empty((0, 2)), 1.0)

    def test_duplicate_centroids(self):
        with pytest.raises(InvalidArgumentError):
            assign_regions(np.zeros((1, 2)), np.zeros((2, 2)), 1.0)


class TestSeparationScore:
    def test_sample_at_one_centroid(self):
        assert separation_score(np.array([[-2.0, 0.0]]), CENTROIDS, 0.6) == 1.0

    def test_sample_near_both_counts_zero(self):
        # with a huge radius every sample is within reach of both centroids
        assert separation_score(np.array([[0.0, 0.0]]), CENTROIDS, 10.0) == 0.0

    def test_sample_near_neither_counts_zero(self):
        assert separation_score(np.array([[50.0, 50.0]]), CENTROIDS, 0.6) == 0.0

    def test_fraction(self):
        samples = np.array([[-2.0, 0.0], [2.0, 0.0], [0.0, 0.0], [50.0, 50.0]])
        assert separation_score(samples, CENTROIDS, 0.6) == 0.5

    def test_empty(self):
        assert separation_score(np.empty((0, 2)), CENTROIDS, 0.6) == 0.0

    def test_nested_radii_monotone(self, scene):
        # up to half the min centroid distance, growing r can only help
        rng = np.random.default_rng(0)
        samples = rng.normal(0, 2, (500, 2))
        cents = np.asarray(list(scene.region_centroids.values()))
        r_small, r_big = 0.5, 1.9
        assert (separation_score(samples, cents, r_small)
                <= separation_score(samples, cents, r_big))


class TestDefaultRadius:
    def test_three_sigma(self, scene):
        assert default_radius(scene) == pytest.approx(0.6)


@pytest.fixture(scope="module")
def small_runs(conditions, scene):
    backend = AnalyticBackend(uncond=unconditional_spec(scene))
    cfg = SamplerConfig(total_steps=25, seed=0)
    batch_a = run_batch(cfg, conditions, backend, None, GraftPolicy.fixed(3), 12)
    batch_b = run_batch(cfg, conditions, backend, None, GraftPolicy.fixed(10), 12)
    return [("PG-fixed-3", batch_a), ("PG-fixed-10", batch_b)]


class TestCompareRuns:
    def test_labels_and_counts(self, small_runs, scene):
        report = compare_runs(small_runs, scene)
        assert [row.label for row in report.rows] == ["PG-fixed-3", "PG-fixed-10"]
        assert all(row.n == 12 for row in report.rows)
        assert report.n_regions == 2

    def test_graft_stats(self, small_runs, scene):
        report = compare_runs(small_runs, scene)
        row = report.row("PG-fixed-3")
        assert (row.graft_mean, row.graft_min, row.graft_max) == (3.0, 3, 3)

    def test_empty_batch_row(self, scene):
        report = compare_runs([("empty", [])], scene)
        row = report.row("empty")
        assert row.n == 0
        assert row.occupancy == ()
        assert row.existence is None and row.separation is None
        assert row.graft_mean is None

    def test_unknown_label_raises(self, small_runs, scene):
        with pytest.raises(KeyError):
            compare_runs(small_runs, scene).row("nope")

    def test_csv_columns_exact(self, small_runs, scene):
        report = compare_runs(small_runs, scene)
        assert report.csv_columns() == [
            "label", "n", "occupancy_1", "occupancy_2", "existence", "separation",
            "graft_mean", "graft_min", "graft_max"]
        header = report.to_csv().splitlines()[0]
        assert header == ("label,n,occupancy_1,occupancy_2,existence,separation,"
                          "graft_mean,graft_min,graft_max")

    def test_csv_and_json_print_identical_numbers(self, small_runs, scene):
        report = compare_runs(small_runs, scene)
        parsed = list(csv.DictReader(io.StringIO(report.to_csv())))
        blob = json.loads(report.to_json())
        for csv_row, json_row in zip(parsed, blob["rows"]):
            assert csv_row["label"] == json_row["label"]
            assert float(csv_row["separation"]) == json_row["separation"]
            assert float(csv_row["occupancy_1"]) == json_row["occupancy"][0]
            assert float(csv_row["graft_mean"]) == json_row["graft_mean"]

    def test_empty_batch_csv_cells_blank(self, scene):
        report = compare_runs([("empty", [])], scene)
        parsed = list(csv.DictReader(io.StringIO(report.to_csv())))
        row = parsed[0]
        assert row["n"] == "0"
        assert row["occupancy_1"] == "" and row["occupancy_2"] == ""
        assert row["existence"] == "" and row["graft_mean"] == ""

    def test_row_order_follows_input_order(self, small_runs, scene):
        flipped = list(reversed(small_runs))
        report = compare_runs(flipped, scene)
        assert [row.label for row in report.rows] == ["PG-fixed-10", "PG-fixed-3"]
        # per-label numbers unchanged by ordering
        base = compare_runs(small_runs, scene)
        assert report.row("PG-fixed-3") == base.row("PG-fixed-3")

    def test_occupancy_sums_to_assigned_fraction(self, small_runs, scene):
        report = compare_runs(small_runs, scene)
        for row in report.rows:
            assert 0.0 <= sum(row.occupancy) <= 1.0

    def test_explicit_radius_respected(self, small_runs, scene):
        report = compare_runs(small_runs, scene, r=2.0)
        assert report.r == 2.0


def test_ablation_labels_frozen():
    assert ABLATION_LABELS == ("SC-only", "PG-fixed-3", "PG-fixed-5", "PG-fixed-7",
                               "PG-fixed-10", "PG-dynamic")
