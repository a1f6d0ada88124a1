import itertools
import math

import numpy as np
import pytest

from streamwarden.abstraction import (
    BoxMonitor,
    QuantitativeMonitor,
    box_contains,
    box_monitor_score,
    fit_boxes,
    fit_kmeans,
    load_artifact,
    min_center_distance,
    quantitative_monitor_score,
    save_artifact,
)
from streamwarden.errors import DataError, MonitorError
from streamwarden.traces import TokenStep


def exhaustive_kmeans_sse(points: np.ndarray, k: int) -> float:
    """Oracle: minimum SSE over every assignment of points to k non-empty
    clusters (centroid = cluster mean). Only for tiny instances."""
    n = len(points)
    best = math.inf
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        labels = np.asarray(labels)
        sse = 0.0
        for c in range(k):
            members = points[labels == c]
            sse += float(((members - members.mean(axis=0)) ** 2).sum())
        best = min(best, sse)
    return best


def hidden_steps(vectors):
    return [
        TokenStep(
            token_id=i,
            token_text=f"t{i}",
            chosen_logprob=-0.1,
            hidden=np.asarray(v, dtype=np.float32),
        )
        for i, v in enumerate(vectors)
    ]


FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]])


class TestFitBoxes:
    def test_hull_of_two_points(self):
        abstraction = fit_boxes(np.array([[0.0, 0.0], [1.0, 2.0]]), 1, 0.0, seed=0)
        assert abstraction.boxes == [[(0.0, 1.0), (0.0, 2.0)]]

    def test_degenerate_single_point(self):
        abstraction = fit_boxes(np.array([[0.0, 0.0]]), 1, 0.0, seed=0)
        assert abstraction.boxes == [[(0.0, 0.0), (0.0, 0.0)]]

    def test_two_cluster_boxes(self):
        # oracle: exhaustive 2-clustering of the 4 points puts the first two
        # and last two together
        sse = exhaustive_kmeans_sse(FOUR_POINTS, 2)
        assert sse == pytest.approx(1.0)
        abstraction = fit_boxes(FOUR_POINTS, 2, 0.0, seed=0)
        got = sorted(abstraction.boxes)
        assert got == [[(0.0, 0.0), (0.0, 1.0)], [(10.0, 10.0), (10.0, 11.0)]]

    def test_epsilon_inflates_relative_to_range(self):
        abstraction = fit_boxes(np.array([[0.0, 0.0], [1.0, 2.0]]), 1, 0.1, seed=0)
        assert abstraction.boxes == [[(-0.1, 1.1), (pytest.approx(-0.2), pytest.approx(2.2))]]

    def test_errors(self):
        with pytest.raises(DataError):
            fit_boxes(np.empty((0, 2)), 1, 0.0, seed=0)
        with pytest.raises(DataError):
            fit_boxes(FOUR_POINTS, 5, 0.0, seed=0)
        with pytest.raises(DataError):
            fit_boxes(FOUR_POINTS, 1, -0.1, seed=0)

    def test_construction_rows_always_contained(self, rng):
        for trial in range(10):
            rows = rng.normal(size=(30, 5)) * rng.uniform(0.1, 10)
            abstraction = fit_boxes(rows, n_boxes=1 + trial % 3, epsilon=0.05 * (trial % 4), seed=trial)
            assert abstraction.contains_batch(rows).all()

    def test_epsilon_monotonicity(self, rng):
        rows = rng.normal(size=(20, 3))
        queries = rng.normal(size=(200, 3)) * 2
        small = fit_boxes(rows, 2, 0.01, seed=1)
        large = fit_boxes(rows, 2, 0.5, seed=1)
        inside_small = small.contains_batch(queries)
        inside_large = large.contains_batch(queries)
        assert not (inside_small & ~inside_large).any()


class TestBoxContains:
    @pytest.fixture
    def box(self):
        return fit_boxes(np.array([[0.0, 0.0], [1.0, 2.0]]), 1, 0.0, seed=0)

    def test_interior(self, box):
        assert box_contains(box, [0.5, 1.0])

    def test_outside_one_dimension(self, box):
        assert not box_contains(box, [2.0, 1.0])

    def test_boundary_inclusive(self, box):
        assert box_contains(box, [1.0, 2.0])

    def test_dimension_mismatch(self, box):
        with pytest.raises(MonitorError):
            box_contains(box, [1.0, 2.0, 3.0])


class TestBoxMonitor:
    @pytest.fixture
    def box(self):
        return fit_boxes(np.array([[0.0, 0.0], [1.0, 1.0]]), 1, 0.0, seed=0)

    def test_all_inside(self, box):
        steps = hidden_steps([[0.5, 0.5]] * 4)
        assert box_monitor_score(steps, box) == 0.0

    def test_one_outside(self, box):
        steps = hidden_steps([[0.5, 0.5], [5.0, 5.0], [0.5, 0.5], [0.5, 0.5]])
        assert box_monitor_score(steps, box) == 0.25

    def test_construction_rows_replayed_score_zero(self, rng):
        # traces carry float32 hidden states, so the hull is fitted on the
        # exact float32-derived values replay will see
        rows = rng.normal(size=(25, 3)).astype(np.float32)
        abstraction = fit_boxes(rows, 2, 0.0, seed=7)
        # oracle: every row individually satisfies box_contains
        assert all(box_contains(abstraction, row) for row in rows)
        monitor = BoxMonitor(abstraction)
        for step in hidden_steps(rows):
            assert monitor.observe(step) == 0.0

    def test_score_in_unit_interval_and_not_monotone(self, box):
        steps = hidden_steps([[9.0, 9.0]] + [[0.5, 0.5]] * 9)
        monitor = BoxMonitor(box)
        scores = [monitor.observe(s) for s in steps]
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores[0] == 1.0 and scores[-1] == pytest.approx(0.1)
        assert scores != sorted(scores)  # strictly decreasing after the hit

    def test_missing_hidden_names_step(self, box):
        steps = hidden_steps([[0.5, 0.5]])
        steps.append(TokenStep(token_id=1, token_text="x", chosen_logprob=-0.1))
        monitor = BoxMonitor(box)
        monitor.observe(steps[0])
        with pytest.raises(MonitorError, match="step 1"):
            monitor.observe(steps[1])


class TestFitKmeans:
    def test_four_point_instance_matches_exhaustive_optimum(self):
        model = fit_kmeans(FOUR_POINTS, k=2, seed=0)
        assert model.inertia == pytest.approx(exhaustive_kmeans_sse(FOUR_POINTS, 2), abs=1e-9)
        centers = sorted(model.centers.tolist())
        assert centers[0] == pytest.approx([0.0, 0.5])
        assert centers[1] == pytest.approx([10.0, 10.5])

    def test_k_equals_rows(self, rng):
        points = rng.normal(size=(6, 2))
        model = fit_kmeans(points, k=6, seed=3)
        assert model.inertia == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(sorted(model.centers.tolist()), sorted(points.tolist()), atol=1e-12)

    def test_identical_points(self):
        points = np.ones((5, 3)) * 2.5
        model = fit_kmeans(points, k=1, seed=0)
        assert model.centers[0] == pytest.approx([2.5, 2.5, 2.5])
        assert model.inertia == 0.0

    def test_errors(self):
        with pytest.raises(DataError):
            fit_kmeans(FOUR_POINTS, k=5, seed=0)
        with pytest.raises(DataError):
            fit_kmeans(FOUR_POINTS, k=0, seed=0)

    def test_inertia_non_increasing_across_seeded_runs(self, rng):
        for seed in range(100):
            points = np.random.default_rng(seed).normal(size=(40, 4))
            model = fit_kmeans(points, k=5, seed=seed)
            history = model.inertia_history
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    @pytest.mark.parametrize(
        "n,k,spread",
        [(10, 2, 0.3), (12, 2, 0.3), (9, 3, 0.2), (12, 3, 0.25)],
    )
    def test_small_instances_match_exhaustive_optimum(self, n, k, spread):
        # well-separated blobs keep the global optimum reachable from the
        # seeded k-means++ start
        rng = np.random.default_rng(n * 100 + k)
        centers = rng.normal(size=(k, 2)) * 50
        points = np.vstack(
            [centers[i % k] + rng.normal(scale=spread, size=2) for i in range(n)]
        )
        model = fit_kmeans(points, k=k, seed=1)
        oracle = exhaustive_kmeans_sse(points, k)
        assert model.inertia == pytest.approx(oracle, rel=1e-9, abs=1e-9)
        # local optimum: no single-point reassignment lowers the SSE
        labels = [int(np.argmin(((p - model.centers) ** 2).sum(axis=1))) for p in points]
        for i in range(n):
            for c in range(k):
                if c == labels[i]:
                    continue
                trial = list(labels)
                trial[i] = c
                if len(set(trial)) < k:
                    continue
                sse = 0.0
                for cc in range(k):
                    members = points[[j for j, lab in enumerate(trial) if lab == cc]]
                    sse += float(((members - members.mean(axis=0)) ** 2).sum())
                assert sse >= model.inertia - 1e-9

    def test_deterministic_given_seed(self, rng):
        points = rng.normal(size=(30, 3))
        a = fit_kmeans(points, k=4, seed=9)
        b = fit_kmeans(points, k=4, seed=9)
        assert np.array_equal(a.centers, b.centers)

    def test_empty_cluster_reseeded(self):
        # k=3 on points with two tight groups forces an empty cluster when
        # two starting centers land in one group
        points = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [10.0, 10.0], [10.1, 10.0]])
        for seed in range(20):
            model = fit_kmeans(points, k=3, seed=seed)
            labels, _ = np.unique(
                [int(np.argmin(((p - model.centers) ** 2).sum(axis=1))) for p in points],
                return_counts=True,
            )
            assert len(labels) == 3  # all clusters non-empty at convergence

    def test_z_normalization(self, rng):
        points = rng.normal(size=(40, 2)) * np.array([1.0, 1000.0])
        model = fit_kmeans(points, k=2, seed=0, z_normalize=True)
        assert model.norm_mean is not None
        d = min_center_distance(model, points[0])
        assert np.isfinite(d)


class TestMinCenterDistance:
    def test_pythagoras(self):
        model = fit_kmeans(np.array([[0.0, 0.0], [10.0, 10.0]]), k=2, seed=0)
        assert min_center_distance(model, [1.0, 1.0]) == pytest.approx(math.sqrt(2), abs=1e-9)

    def test_zero_at_center(self):
        model = fit_kmeans(np.array([[0.0, 0.0], [10.0, 10.0]]), k=2, seed=0)
        assert min_center_distance(model, [10.0, 10.0]) == 0.0

    def test_three_four_five(self):
        model = fit_kmeans(np.array([[0.0, 0.0]]), k=1, seed=0)
        assert min_center_distance(model, [3.0, 4.0]) == pytest.approx(5.0, abs=1e-12)

    def test_dimension_mismatch(self):
        model = fit_kmeans(np.array([[0.0, 0.0]]), k=1, seed=0)
        with pytest.raises(MonitorError):
            min_center_distance(model, [1.0, 2.0, 3.0])


class TestQuantitativeMonitor:
    @pytest.fixture
    def model(self):
        return fit_kmeans(np.array([[0.0, 0.0]]), k=1, seed=0)

    def test_running_max(self, model):
        steps = hidden_steps([[0.1, 0.0], [0.5, 0.0], [0.2, 0.0]])
        monitor = QuantitativeMonitor(model)
        scores = [monitor.observe(s) for s in steps]
        assert scores == pytest.approx([0.1, 0.5, 0.5], abs=1e-7)

    def test_all_at_centers(self, model):
        steps = hidden_steps([[0.0, 0.0]] * 3)
        assert quantitative_monitor_score(steps, model) == 0.0

    def test_single_step(self, model):
        assert quantitative_monitor_score(hidden_steps([[3.0, 4.0]]), model) == pytest.approx(
            5.0, abs=1e-7
        )

    def test_streaming_monotone(self, rng, model):
        monitor = QuantitativeMonitor(model)
        last = -1.0
        for step in hidden_steps(rng.normal(size=(50, 2))):
            score = monitor.observe(step)
            assert score >= last
            last = score


class TestArtifactSerialization:
    def test_box_round_trip(self, rng, tmp_path):
        abstraction = fit_boxes(rng.normal(size=(20, 3)), 2, 0.05, seed=4)
        path = tmp_path / "box.json"
        save_artifact(abstraction, path)
        loaded = load_artifact(path)
        assert loaded.boxes == abstraction.boxes
        assert loaded.epsilon == abstraction.epsilon
        assert loaded.dim == abstraction.dim

    def test_kmeans_round_trip(self, rng, tmp_path):
        model = fit_kmeans(rng.normal(size=(20, 3)), 4, seed=4, z_normalize=True)
        path = tmp_path / "kmeans.json"
        save_artifact(model, path)
        loaded = load_artifact(path)
        assert np.array_equal(loaded.centers, model.centers)
        assert loaded.inertia == model.inertia
        assert np.array_equal(loaded.norm_mean, model.norm_mean)

    def test_load_missing(self, tmp_path):
        with pytest.raises(DataError):
            load_artifact(tmp_path / "nope.json")
