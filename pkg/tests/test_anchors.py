"""
Unit tests for anchor generation and best possible recall.
"""

import itertools
from unittest.mock import patch

import numpy as np
import pytest

from src.anchors import (AnchorSet, best_possible_recall, collect_wh, generate_anchors, kmeans_wh,
                         ratio_metric)
from src.catalog import class_catalog_endoscope
from src.errors import ValidationError
from src.models import Annotation, BoxAA, BoxRot, Dataset, Frame


def _dataset(sizes, width=640, height=640):
    """One frame per (w, h) box, all boxes anchored at the origin."""
    frames = tuple(Frame(f"f{i:03d}", width, height, annotations=(Annotation(0, BoxAA(0, 0, w, h)),))
                   for i, (w, h) in enumerate(sizes))
    return Dataset(class_catalog_endoscope(), frames)


class TestCollectWh:

    def test_letterbox_scaling(self):
        wh, excluded = collect_wh(_dataset([(100, 50)], 1280, 720), img_size=640)

        np.testing.assert_allclose(wh, [[50, 25]])
        assert excluded == 0

    def test_normalized_boxes_use_image_size(self):
        frame = Frame("f", 640, 320, annotations=(Annotation(0, BoxAA(0, 0, 0.5, 0.25, normalized=True)),))

        wh, _ = collect_wh(Dataset(class_catalog_endoscope(), (frame,)), img_size=640)

        np.testing.assert_allclose(wh, [[320, 80]])

    @patch('src.anchors.log_warning')
    def test_degenerate_boxes_excluded(self, mock_log_warning):
        wh, excluded = collect_wh(_dataset([(1, 40), (30, 40)]))

        assert excluded == 1
        np.testing.assert_allclose(wh, [[30, 40]])
        mock_log_warning.assert_called_once()

    def test_frame_without_dimensions(self):
        frame = Frame("f", annotations=(Annotation(0, BoxAA(0, 0, 10, 10)),))
        with pytest.raises(ValidationError):
            collect_wh(Dataset(class_catalog_endoscope(), (frame,)))

    def test_rotated_boxes_rejected(self):
        frame = Frame("f", 640, 640, annotations=(Annotation(0, BoxRot(5, 5, 4, 2)),))
        with pytest.raises(ValidationError):
            collect_wh(Dataset(class_catalog_endoscope(), (frame,)))


class TestRatioMetric:

    def test_values(self):
        metric = ratio_metric(np.array([[10.0, 20.0]]), np.array([[10.0, 20.0], [20.0, 10.0], [5.0, 20.0]]))
        np.testing.assert_allclose(metric, [[1.0, 0.5, 0.5]])

    def test_objective_never_increases(self):
        rng = np.random.default_rng(4)
        wh = rng.uniform(5, 300, size=(200, 2))

        centroids, history = kmeans_wh(wh, 6, np.random.default_rng(0))

        assert centroids.shape == (6, 2)
        assert all(b <= a for a, b in zip(history, history[1:]))

    def test_warm_start_keeps_initial_centroids_as_seeds(self):
        wh = np.array([[10.0, 10.0], [50.0, 50.0], [200.0, 100.0]])

        centroids, history = kmeans_wh(wh, 3, np.random.default_rng(0), max_iter=0,
                                       initial=np.array([[10.0, 10.0]]))

        assert centroids[0].tolist() == [10.0, 10.0]
        assert history == [history[0]]


class TestGenerateAnchors:

    def test_identical_boxes(self):
        anchors = generate_anchors(_dataset([(50, 80)] * 12))

        np.testing.assert_array_equal(anchors.as_array(), np.tile([50.0, 80.0], (9, 1)))
        assert anchors.bpr == 1.0
        assert len(anchors.levels) == 3
        assert all(len(level) == 3 for level in anchors.levels)

    def test_two_clusters(self):
        anchors = generate_anchors(_dataset([(10, 10)] * 5 + [(100, 200)] * 5), n_per_level=1, levels=2)

        assert anchors.levels == (((10.0, 10.0),), ((100.0, 200.0),))
        assert anchors.to_config_block() == "anchors:\n  - [10,10]  # P3/8\n  - [100,200]  # P4/16\n"

    def test_deterministic_for_seed(self):
        rng = np.random.default_rng(7)
        sizes = [tuple(s) for s in rng.uniform(8, 400, size=(120, 2))]

        first = generate_anchors(_dataset(sizes), n_per_level=5, seed=42)
        second = generate_anchors(_dataset(sizes), n_per_level=5, seed=42)

        assert first.levels == second.levels
        assert first.bpr == second.bpr
        assert first.as_array().shape == (15, 2)

    def test_levels_sorted_by_area(self):
        rng = np.random.default_rng(9)
        sizes = [tuple(s) for s in rng.uniform(8, 400, size=(90, 2))]

        areas = np.prod(generate_anchors(_dataset(sizes)).as_array(), axis=1)

        assert np.all(np.diff(areas) >= 0)

    def test_two_tight_clusters_match_best_partition(self):
        sizes = [(10, 10), (11, 10), (10, 12), (12, 11), (11, 11),
                 (100, 200), (104, 196), (97, 205), (102, 201), (99, 198)]
        wh = np.array(sizes, dtype=float)

        best_objective, best_labels = None, None
        for labels in itertools.product((0, 1), repeat=len(sizes)):
            labels = np.array(labels)
            if labels.min() == labels.max():
                continue
            means = np.array([wh[labels == j].mean(axis=0) for j in (0, 1)])
            objective = np.mean(1.0 - ratio_metric(wh, means).max(axis=1))
            if best_objective is None or objective < best_objective - 1e-12:
                best_objective, best_labels = objective, labels

        anchors = generate_anchors(_dataset(sizes), n_per_level=1, levels=2, seed=3).as_array()

        assigned = ratio_metric(wh, anchors).argmax(axis=1)
        assert assigned.tolist() in (best_labels.tolist(), (1 - best_labels).tolist())
        for j in (0, 1):
            members = wh[assigned == j]
            assert np.all(anchors[j] >= members.min(axis=0)) and np.all(anchors[j] <= members.max(axis=0))

    def test_more_anchors_never_lower_bpr(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            sizes = [tuple(s) for s in np.exp(rng.uniform(np.log(3), np.log(600), size=(60, 2)))]
            dataset = _dataset(sizes)

            three = generate_anchors(dataset, n_per_level=3, seed=seed)
            five = generate_anchors(dataset, n_per_level=5, seed=seed)

            assert five.bpr >= three.bpr - 1e-9, f"seed {seed}"

    def test_bpr_matches_per_box_check(self):
        rng = np.random.default_rng(21)
        sizes = [tuple(s) for s in rng.uniform(4, 500, size=(80, 2))]

        anchors = generate_anchors(_dataset(sizes), n_per_level=1, levels=3, seed=2)

        covered = 0
        for w, h in sizes:
            worst = [max(w / aw, aw / w, h / ah, ah / h) for aw, ah in anchors.as_array()]
            covered += min(worst) < 4.0
        assert anchors.bpr == pytest.approx(covered / len(sizes))

    def test_anchors_within_observed_extents(self):
        rng = np.random.default_rng(13)
        wh = rng.uniform(5, 300, size=(70, 2))

        anchors = generate_anchors(_dataset([tuple(s) for s in wh]), n_per_level=5).as_array()

        assert np.all(anchors >= wh.min(axis=0) - 1e-9)
        assert np.all(anchors <= wh.max(axis=0) + 1e-9)

    def test_too_few_boxes(self):
        with pytest.raises(ValidationError):
            generate_anchors(_dataset([(20, 20)] * 4))

    def test_invalid_level_count(self):
        with pytest.raises(ValidationError):
            generate_anchors(_dataset([(20, 20)] * 9), n_per_level=0)


class TestBestPossibleRecall:

    def test_tiny_anchor_misses_large_box(self):
        anchors = AnchorSet(levels=(((1.0, 1.0),),), n_per_level=1, bpr=0.0)

        assert best_possible_recall(anchors, _dataset([(100, 100)])) == 0.0

    def test_threshold_boundary(self):
        anchors = AnchorSet(levels=(((10.0, 10.0),),), n_per_level=1, bpr=0.0)
        dataset = _dataset([(30, 30), (50, 10)])

        assert best_possible_recall(anchors, dataset) == 0.5
        assert best_possible_recall(anchors, dataset, ratio_threshold=6.0) == 1.0

    def test_empty_dataset(self):
        anchors = AnchorSet(levels=(((10.0, 10.0),),), n_per_level=1, bpr=0.0)
        with pytest.raises(ValidationError):
            best_possible_recall(anchors, Dataset(class_catalog_endoscope(), ()))

    def test_to_dict(self):
        anchors = AnchorSet(levels=(((10.0, 12.5),),), n_per_level=1, bpr=1.0, objective_history=(0.3, 0.2))

        assert anchors.to_dict() == {"levels": [[[10.0, 12.5]]], "n_per_level": 1, "bpr": 1.0,
                                     "img_size": 640, "excluded": 0, "iterations": 1}
