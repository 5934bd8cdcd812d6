import itertools

import numpy as np
import pytest

from agrimon.errors import MissingFeature, NoQualifyingClustering
from agrimon.ml import Dataset
from agrimon.rice import (
    ClusterCandidate,
    RiceReferenceSignature,
    identify_rice_cluster,
    land_water_split,
    rice_map,
    run_rice_pipeline,
    select_best_k,
)
from agrimon.synthetic import WATER, rice_scenario


def water_crop_dataset(n_water=300, n_crop=700, seed=0):
    rng = np.random.default_rng(seed)
    ndvi = np.concatenate([rng.normal(0.0, 0.05, (n_water, 6)), rng.normal(0.7, 0.05, (n_crop, 6))])
    ndwi = np.concatenate([rng.normal(0.4, 0.05, (n_water, 6)), rng.normal(-0.4, 0.05, (n_crop, 6))])
    names = [f"NDVI_{i}" for i in range(6)] + [f"NDWI_{i}" for i in range(6)]
    truth_land = np.r_[np.zeros(n_water, bool), np.ones(n_crop, bool)]
    return Dataset(np.hstack([ndvi, ndwi]), None, names), truth_land


class TestLandWater:
    def test_matches_generator(self):
        ds, truth = water_crop_dataset()
        land = land_water_split(ds, seed=1)
        assert (land == truth).mean() >= 0.99

    def test_all_land(self):
        rng = np.random.default_rng(2)
        ds = Dataset(rng.normal(0.6, 0.1, (200, 4)), None, [f"NDVI_{i}" for i in range(4)])
        assert land_water_split(ds, seed=0).all()

    def test_partition(self):
        ds, _ = water_crop_dataset()
        land = land_water_split(ds, seed=0)
        water = ~land
        assert (land | water).all() and not (land & water).any()

    def test_missing_ndvi(self):
        with pytest.raises(MissingFeature):
            land_water_split(Dataset(np.zeros((5, 2)), None, ["NDWI_0", "NDWI_1"]))


class TestIdentify:
    def test_exact_match(self):
        ref = RiceReferenceSignature(("a", "b"), np.array([1.0, 2.0]))
        assert identify_rice_cluster(np.array([[0.0, 0], [1, 2], [5, 5]]), ref) == 1

    def test_exhaustive_mse(self):
        ref = RiceReferenceSignature(("a", "b", "c"), np.array([0.2, 0.5, 0.1]))
        C = np.array([[0.3, 0.4, 0.0], [0.2, 0.9, 0.1], [0.1, 0.5, 0.3]])
        mse = [sum((C[i, j] - ref.signature[j]) ** 2 for j in range(3)) / 3 for i in range(3)]
        assert identify_rice_cluster(C, ref) == int(np.argmin(mse)) == 0

    def test_tie_lowest(self):
        ref = RiceReferenceSignature(("a",), np.array([0.0]))
        assert identify_rice_cluster(np.array([[1.0], [-1.0], [1.0]]), ref) == 0


class TestSelectBestK:
    def test_rule_trace(self):
        c6 = ClusterCandidate(6, 0, 0.92, 0.88, 0.899)
        c7 = ClusterCandidate(7, 0, 0.97, 0.916, 0.943)
        assert select_best_k([c6, c7]).k == 7

    def test_no_survivor(self):
        with pytest.raises(NoQualifyingClustering):
            select_best_k([ClusterCandidate(k, 0, 0.99, 0.85, 0.9) for k in range(5, 9)])

    def test_tie_smallest_k(self):
        cands = [ClusterCandidate(9, 0, 0.95, 0.9, 0.92), ClusterCandidate(6, 1, 0.93, 0.91, 0.92)]
        assert select_best_k(cands).k == 6

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        cands = [ClusterCandidate(k, 0, *rng.uniform(0.86, 1.0, 2), round(rng.uniform(0.8, 1), 2)) for k in range(5, 11)]
        best = {select_best_k(list(p)) for p in itertools.permutations(cands)}
        assert len(best) == 1


class TestRiceMap:
    def test_area_arithmetic(self):
        rng = np.random.default_rng(0)
        X = np.r_[rng.normal(0, 0.1, (1000, 2)), rng.normal(3, 0.1, (500, 2))]
        pseudo = np.r_[np.ones(1000, bool), np.zeros(500, bool)]
        out = rice_map(X, pseudo, n_trees=5, seed=0)
        assert out.labels.sum() == 1000
        assert out.total_area_ha == pytest.approx(10.0)

    def test_pseudo_equals_truth(self):
        # separable covers: a forest trained on exact labels reproduces them
        rng = np.random.default_rng(1)
        truth = rng.random(600) < 0.3
        X = rng.normal(size=(600, 3)) * 0.2 + truth[:, None] * 2.0
        out = rice_map(X, truth, n_trees=10, seed=0, truth=truth)
        assert out.metrics["map"]["f1"] >= out.metrics["pseudo"]["f1"] - 1e-12


@pytest.fixture(scope="module")
def small_scenario():
    return rice_scenario(n=6000, seed=3)


class TestPipeline:
    def test_end_to_end_and_deterministic(self, small_scenario):
        sc = small_scenario
        ds = Dataset(sc.X, None, sc.feature_names)
        kw = dict(k_min=5, k_max=8, seed=4, n_trees=10, truth=sc.is_rice)
        a = run_rice_pipeline(ds, sc.reference_idx, sc.reference_labels, **kw)
        b = run_rice_pipeline(ds, sc.reference_idx, sc.reference_labels, workers=3, **kw)
        np.testing.assert_array_equal(a.map.labels, b.map.labels)
        assert a.best == b.best
        assert a.best.precision > 0.9 and a.best.recall > 0.85
        m = a.map.metrics
        assert m["map"]["f1"] >= m["pseudo"]["f1"] - 0.02
        # water pixels never end up as rice
        assert not a.map.labels[sc.truth_class == WATER].any()
