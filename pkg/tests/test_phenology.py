import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agrimon.errors import (
    AmbiguousStageOrder,
    DataError,
    EmptyEval,
    InsufficientData,
    MissingFeature,
    OutOfSeason,
)
from agrimon.minicube import Cube, GridSpec, ParcelIdRaster, zonal_stats
from agrimon.ml import FcmModel
from agrimon.phenology import (
    DOY_FEATURES,
    METACLASSES,
    STAGE_DOY_RANGES,
    ContinuousStage,
    FcmPhenoModel,
    GroundObservation,
    Metaclass,
    Prediction,
    ReferenceParcel,
    Stage,
    admissible_stages,
    baseline_doy,
    build_element_space,
    displacement,
    ensemble_vote,
    eval_phenology,
    fit_phenology,
    metaclass_from_weights,
    modal_stage_order,
    ndcg_at_2,
    predict_continuous,
    train_stage_regressors,
    truth_metaclass,
)
from agrimon.phenology import fcm_model
from agrimon.sits import TimeSeries
from agrimon.synthetic import cotton_scenario

RE, LD, S, F, BD, BO = Stage


def weights(**kw):
    w = np.zeros(6)
    for k, v in kw.items():
        w[int(Stage[k]) - 1] = v
    return w


class TestMetaclass:
    @pytest.mark.parametrize(
        "meta, idx",
        [
            (Metaclass(RE), 1),
            (Metaclass(RE, LD), 2),
            (Metaclass(LD, RE), 3),
            (Metaclass(LD), 4),
            (Metaclass(F, BD), 11),
            (Metaclass(BO, BD), 15),
            (Metaclass(BO), 16),
        ],
    )
    def test_index(self, meta, idx):
        assert meta.index == idx

    def test_sixteen_ordered(self):
        assert len(METACLASSES) == 16
        assert [m.index for m in METACLASSES] == list(range(1, 17))
        assert all(Metaclass.from_index(m.index) == m for m in METACLASSES)

    def test_non_adjacent_rejected(self):
        with pytest.raises(ValueError):
            Metaclass(RE, F)

    def test_parse_names(self):
        assert Metaclass("bd", "F") == Metaclass(BD, F)
        assert Metaclass(BD, F).label == "BD/F"


class TestPredictRule:
    def test_secondary_above_threshold(self):
        p = metaclass_from_weights(weights(RE=0.70, LD=0.25, S=0.02, F=0.01, BD=0.01, BO=0.01), 0.11)
        assert p.metaclass == Metaclass(RE, LD) and p.metaclass.index == 2

    def test_below_threshold(self):
        p = metaclass_from_weights(weights(LD=0.90, RE=0.04, S=0.03, F=0.01, BD=0.01, BO=0.01), 0.11)
        assert p.metaclass == Metaclass(LD) and p.metaclass.index == 4

    def test_non_adjacent_demoted(self):
        p = metaclass_from_weights(weights(RE=0.5, F=0.3, LD=0.1, S=0.05, BD=0.03, BO=0.02), 0.11)
        assert p.metaclass == Metaclass(RE)

    @given(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6), st.floats(0.01, 0.49))
    def test_output_in_set_and_ranking_is_permutation(self, w, th):
        p = metaclass_from_weights(np.array(w), th)
        assert p.metaclass in METACLASSES
        assert sorted(p.ranking) == list(Stage)

    @given(st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6, unique=True), st.floats(0.1, 10.0))
    def test_top1_invariant_under_monotone_rescale(self, w, a):
        w = np.array(w)
        th = 0.11
        assert (
            metaclass_from_weights(w, th).ranking[0]
            == metaclass_from_weights(a * w**3 + 1.0, th).ranking[0]
        )


class TestEvaluation:
    def test_diff2_case(self):
        pred, truth = Metaclass(LD), Metaclass(S, LD)
        assert displacement(pred, truth) == 2
        ev = eval_phenology([pred], [truth])
        assert ev["maxdiff-1"] == 0.0 and ev["maxdiff-2"] == 1.0

    def test_identity(self):
        ev = eval_phenology(list(METACLASSES), list(METACLASSES))
        assert ev["maxdiff-0"] == 1.0 and ev["ndcg@2"] == 1.0 and ev["kappa"] == pytest.approx(1.0)

    def test_ndcg_swap(self):
        oracle = (1 + 2 / math.log2(3)) / (2 + 1 / math.log2(3))
        val = ndcg_at_2((LD, RE, S), Metaclass(RE, LD))
        assert val == pytest.approx(oracle, abs=1e-12)
        assert val == pytest.approx(0.859718, abs=1e-6)

    def test_ndcg_unit_truth(self):
        assert ndcg_at_2((LD, RE), Metaclass(RE)) == pytest.approx((2 / math.log2(3)) / 2)

    def test_empty(self):
        with pytest.raises(EmptyEval):
            eval_phenology([], [])
        with pytest.raises(EmptyEval):
            eval_phenology([Metaclass(RE)], [])

    def test_mean_displacement_per_truth(self):
        ev = eval_phenology([Metaclass(RE), Metaclass(LD), Metaclass(BO)], [Metaclass(RE), Metaclass(RE), Metaclass(BO)])
        assert ev["mean_displacement"] == {1: 1.5, 16: 0.0}

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(1, 16), st.integers(1, 16)), min_size=1, max_size=40))
    def test_maxdiff_monotone(self, pairs):
        preds = [Metaclass.from_index(a) for a, _ in pairs]
        truths = [Metaclass.from_index(b) for _, b in pairs]
        ev = eval_phenology(preds, truths)
        md = [ev[f"maxdiff-{o}"] for o in range(4)]
        assert md == sorted(md) and md[3] <= 1.0
        assert (md[3] == 1.0) == all(abs(a - b) <= 3 for a, b in pairs)


def long_table(values: dict):
    """values: (field, day) -> {feature: value}"""
    rows = [(f, d, k, v) for (f, d), feats in values.items() for k, v in feats.items()]
    return pd.DataFrame(rows, columns=["field_id", "day", "variable", "value"])


class TestElementSpace:
    def test_row_count_and_doy_columns(self):
        vals = {(f, d): {"NDVI": 0.1 * d, "PSRI": 0.01 * f} for f in range(3) for d in (100, 130, 160, 190)}
        sp = build_element_space(long_table(vals), ["NDVI", "PSRI"])
        assert sp.dataset.n == 12
        assert sp.dataset.feature_names == ("NDVI", "PSRI") + DOY_FEATURES
        s, c = sp.dataset.X[:, 2], sp.dataset.X[:, 3]
        np.testing.assert_allclose(s**2 + c**2, 1.0, atol=1e-15)

    def test_missing_feature_dropped_and_reported(self):
        vals = {(f, d): {"NDVI": 0.5, "PSRI": 0.1} for f in range(2) for d in (100, 110)}
        del vals[(1, 110)]["PSRI"]
        sp = build_element_space(long_table(vals), ["NDVI", "PSRI"])
        assert sp.dataset.n == 3
        assert sp.dropped == [(1, 110, ("PSRI",))]

    def test_absent_pair_reported(self):
        vals = {(0, 100): {"NDVI": 0.5}}
        sp = build_element_space(long_table(vals), ["NDVI"], fields=[0, 1], days=[100])
        assert sp.dataset.n == 1 and sp.dropped == [(1, 100, ("NDVI",))]

    def test_missing_column(self):
        with pytest.raises(MissingFeature):
            build_element_space(pd.DataFrame({"field_id": [1], "value": [0.0]}), ["NDVI"])

    def test_values_equal_zonal_means(self):
        rng = np.random.default_rng(5)
        grid = GridSpec(0.0, 80.0, 10.0, 8, 8)
        ids = ParcelIdRaster(grid, np.repeat(np.arange(4), 16).reshape(8, 8))
        cube = Cube(grid, (120, 150, 180), ("NDVI", "NDWI"), rng.random((3, 2, 8, 8)))
        sp = build_element_space(zonal_stats(cube, ids, "mean"), ["NDVI", "NDWI"])
        for row, (fid, day) in enumerate(zip(sp.field_ids, sp.days)):
            t = cube.dates.index(int(day))
            for v, name in enumerate(("NDVI", "NDWI")):
                oracle = cube.values[t, v][ids.ids == fid].mean()
                assert sp.dataset.X[row, v] == pytest.approx(oracle, abs=1e-12)


def fake_fcm(U):
    def fit(Z, c, m=2.0, seed=0, max_iter=300, tol=1e-9):
        return FcmModel(np.zeros((c, Z.shape[1])), m, c, seed, (1.0,)), U

    return fit


class TestFitPhenology:
    def test_constant_third_weight_threshold(self, monkeypatch):
        # one field, six days; cluster t dominates day t, third weight always 0.11
        base = np.array([0.5, 0.2, 0.11, 0.09, 0.06, 0.04])
        U = np.array([np.roll(base, t) for t in range(6)])
        monkeypatch.setattr(fcm_model, "fcm_fit", fake_fcm(U))
        vals = {(0, d): {"NDVI": float(d)} for d in range(100, 160, 10)}
        model = fit_phenology(build_element_space(long_table(vals), ["NDVI"]), seed=0, n_init=1)
        assert model.th_w == pytest.approx(0.11)
        assert model.stage_order == tuple(Stage)

    def test_single_field_monotone_curve(self):
        vals = {(0, d): {"NDVI": (d - 100) / 10.0} for d in range(100, 340, 4)}
        space = build_element_space(long_table(vals), ["NDVI"])
        model = fit_phenology(space, seed=0)
        assert sorted(model.stage_order) == list(Stage)
        preds = model.predict(space.frame())
        prim = [int(p.metaclass.primary) for p in preds]
        assert prim == sorted(prim) and prim[0] == 1 and prim[-1] == 6

    def test_modal_order(self):
        labels = np.array([0, 1, 2, 0, 1, 2, 0, 2, 1])
        fields = np.repeat([0, 1, 2], 3)
        days = np.tile([1, 2, 3], 3)
        assert modal_stage_order(labels, fields, days, c=3) == (0, 1, 2)

    def test_revisit_keeps_first_appearance(self):
        labels = np.array([0, 1, 0, 2])
        assert modal_stage_order(labels, np.zeros(4), np.arange(4), c=3) == (0, 1, 2)

    def test_ambiguous(self):
        labels = np.array([0, 1, 2, 1, 0, 2, 2, 1, 0])
        fields = np.repeat([0, 1, 2], 3)
        with pytest.raises(AmbiguousStageOrder):
            modal_stage_order(labels, fields, np.tile([1, 2, 3], 3), c=3)
        with pytest.raises(AmbiguousStageOrder):
            modal_stage_order(np.zeros(3, int), np.zeros(3), np.arange(3), c=3)

    def test_tie_goes_to_mean_day_order(self):
        # two fields per order; equal mean days fall back to the lower tuple
        labels = np.array([0, 1, 0, 1, 1, 0, 1, 0])
        fields = np.repeat([0, 1, 2, 3], 2)
        days = np.tile([1.0, 2.0], 4)
        assert modal_stage_order(labels, fields, days, c=2) == (0, 1)
        # an extra partial field seen early in cluster 1 pulls its mean day forward
        labels = np.r_[labels, 1]
        fields = np.r_[fields, 4]
        days = np.r_[days, 0.0]
        assert modal_stage_order(labels, fields, days, c=2) == (1, 0)


@pytest.fixture(scope="module")
def cotton():
    sc = cotton_scenario(n_fields=40, seed=1)
    space = build_element_space(sc.table, ["NDVI", "NDWI", "PSRI", "AGDD"])
    fmap = {f.field_id: f for f in sc.fields}
    truth = [truth_metaclass(float(fmap[f].progress(d))) for f, d in zip(space.field_ids, space.days)]
    return sc, space, truth


class TestSyntheticSeasons:
    def test_stage_order_and_accuracy(self, cotton):
        sc, space, truth = cotton
        model = fit_phenology(space, seed=3)
        preds = model.predict(space.frame())
        ev = eval_phenology(preds, truth)
        assert 0 < model.th_w < 0.5
        assert sorted(model.stage_order) == list(Stage)
        # primary stage rises with the day for every field
        prim = np.array([int(p.metaclass.primary) for p in preds])
        first = prim[space.days == space.days.min()].mean()
        last = prim[space.days == space.days.max()].mean()
        assert first < 2 and last > 5
        assert ev["maxdiff-1"] >= 0.85

    def test_beats_doy_baseline(self, cotton):
        _, space, truth = cotton
        X = space.frame()
        full = eval_phenology(fit_phenology(space, seed=3).predict(X), truth)
        base = eval_phenology(baseline_doy(space, seed=3).predict(X), truth)
        assert full["maxdiff-1"] >= base["maxdiff-1"] + 0.02

    def test_predict_accepts_dict_and_rejects_missing(self, cotton):
        _, space, _ = cotton
        model = fit_phenology(space, seed=0)
        row = space.frame().iloc[0]
        p = model.predict({k: row[k] for k in model.feature_set})[0]
        assert p.metaclass in METACLASSES
        with pytest.raises(MissingFeature):
            model.predict(pd.DataFrame({"NDVI": [0.3]}))


def stub_model(w):
    """Model whose memberships are fixed to ``w`` regardless of input."""

    class Stub(FcmPhenoModel):
        def stage_weights(self, X):
            return np.atleast_2d(w)

    fcm = FcmModel(np.zeros((6, 1)), 2.0, 6)
    return Stub(fcm, tuple(Stage), 0.11, ("x",), np.zeros(1), np.ones(1))


class TestEnsemble:
    def test_unanimous_and_single(self):
        w = weights(S=0.8, F=0.15, LD=0.03, RE=0.01, BD=0.005, BO=0.005)
        models = [stub_model(w)] * 3
        assert ensemble_vote(models, [0.0]).metaclass == Metaclass(S, F)
        assert ensemble_vote(models[:1], [0.0]).metaclass == metaclass_from_weights(w, 0.11).metaclass

    def test_two_two_tie(self):
        a = weights(LD=0.60, S=0.30, RE=0.04, F=0.03, BD=0.02, BO=0.01)  # LD/S
        b = weights(S=0.70, LD=0.05, F=0.20, RE=0.02, BD=0.02, BO=0.01)  # S/F
        ens = ensemble_vote([stub_model(a), stub_model(a), stub_model(b), stub_model(b)], [0.0])
        # mean LD membership 0.325 < mean S membership 0.50
        assert ens.metaclass == Metaclass(S, F)
        ens = ensemble_vote([stub_model(b), stub_model(a)], [0.0])
        assert ens.metaclass == Metaclass(S, F)


class TestContinuousStage:
    def test_describe(self):
        assert ContinuousStage(510).describe() == "BD, 10% complete"
        assert ContinuousStage(510).stage is Stage.BD

    def test_range(self):
        with pytest.raises(ValueError):
            ContinuousStage(99.0)
        assert ContinuousStage(700).stage is Stage.BO and ContinuousStage(700).completion == 1.0

    def test_admissible(self):
        assert admissible_stages(50) == []
        assert admissible_stages(185) == [LD, S, F]
        for st_, (lo, hi) in STAGE_DOY_RANGES.items():
            assert st_ in admissible_stages(lo) and st_ in admissible_stages(hi)


@pytest.fixture(scope="module")
def refs_and_fields():
    sc = cotton_scenario(n_fields=12, seed=4)
    feats = ("NDVI", "NDWI", "PSRI")
    series = {f.field_id: {k: sc.daily[f.field_id][k] for k in feats} for f in sc.fields}
    refs = [ReferenceParcel.from_boundaries(f.field_id, series[f.field_id], f.boundaries) for f in sc.fields[:5]]
    return sc, series, refs


class TestPredictContinuous:
    def test_self_match(self, refs_and_fields):
        sc, series, refs = refs_and_fields
        f = sc.fields[0]
        start, end = f.stage_window(4)
        dop = float(round(start + 0.4 * (end - start)))
        out = predict_continuous(series[f.field_id], refs, dop, detail=True)
        step = 100 * 5 / (end - start)
        assert abs(out.stage.value - 440) <= step
        assert all(k[0][1] == 0.0 and k[0][2] == f.field_id for k in out.kept.values())

    def test_out_of_season(self, refs_and_fields):
        sc, series, refs = refs_and_fields
        with pytest.raises(OutOfSeason):
            predict_continuous(series[sc.fields[6].field_id], refs, 50.0)

    def test_short_series(self, refs_and_fields):
        _, _, refs = refs_and_fields
        ts = TimeSeries(np.arange(150.0, 200.0), np.zeros(50))
        with pytest.raises(InsufficientData):
            predict_continuous({"NDVI": ts}, refs, 200.0)

    def test_missing_reference_feature(self, refs_and_fields):
        sc, series, refs = refs_and_fields
        ts = series[sc.fields[6].field_id]["NDVI"]
        with pytest.raises(MissingFeature):
            predict_continuous({"BORI": ts}, refs, 200.0)

    def test_close_to_truth(self, refs_and_fields):
        sc, series, refs = refs_and_fields
        err = [
            abs(predict_continuous(series[f.field_id], refs, d).value - f.continuous(d))
            for f in sc.fields[5:]
            for d in (160.0, 200.0, 240.0)
        ]
        assert np.median(err) < 15

    @settings(max_examples=25, deadline=None)
    @given(st.integers(150, 300), st.integers(5, 11))
    def test_in_range_and_admissible(self, refs_and_fields, dop, k):
        sc, series, refs = refs_and_fields
        f = sc.fields[k]
        try:
            v = predict_continuous(series[f.field_id], refs, float(dop))
        except OutOfSeason:
            return
        assert 100 <= v.value <= 700
        assert v.stage in admissible_stages(dop)


@pytest.fixture(scope="module")
def regression_data():
    sc = cotton_scenario(n_fields=80, seed=2)
    feats = ["NDVI", "NDWI", "PSRI"]
    wide = sc.table.pivot_table(index=["field_id", "day"], columns="variable", values="value")
    cube = np.stack([wide.loc[f.field_id][feats].to_numpy() for f in sc.fields])
    return sc, cube, feats


class TestStageRegressors:
    def test_noiseless_labels(self, regression_data):
        sc, cube, feats = regression_data
        days = [160.0, 200.0, 240.0]
        labels = {d: np.array([f.continuous(d) for f in sc.fields]) for d in days}
        regs = train_stage_regressors(cube, sc.days, feats, labels, seed=0)
        assert len(regs) == 3 and not regs.skipped
        assert all(r.holdout_mae < 15 for r in regs.regressors)
        assert regs.for_day(215.0).day == 200.0
        pred = regs.predict(cube, sc.days, feats, 240.0)
        assert np.abs(pred - labels[240.0]).mean() < 15

    def test_single_date(self, regression_data):
        sc, cube, feats = regression_data
        regs = train_stage_regressors(cube, sc.days, feats, {180.0: np.full(80, 350.0)}, depths=(4,), n_trees=3)
        assert len(regs) == 1
        np.testing.assert_array_equal(regs.predict(cube, sc.days, feats, 180.0), 350.0)

    def test_sparse_date_skipped(self, regression_data):
        sc, cube, feats = regression_data
        y = np.full(80, np.nan)
        y[:49] = 300.0
        regs = train_stage_regressors(cube, sc.days, feats, {170.0: y}, n_trees=3)
        assert len(regs) == 0
        assert regs.skipped[0].day == 170.0 and regs.skipped[0].n_labels == 49
        with pytest.raises(OutOfSeason):
            regs.for_day(200.0)

    def test_deterministic(self, regression_data):
        sc, cube, feats = regression_data
        labels = {190.0: np.array([f.continuous(190.0) for f in sc.fields])}
        a = train_stage_regressors(cube, sc.days, feats, labels, n_trees=5, seed=9)
        b = train_stage_regressors(cube, sc.days, feats, labels, n_trees=5, seed=9, workers=2)
        assert a.regressors[0].model.equals(b.regressors[0].model)


class TestGroundObservation:
    def test_valid(self):
        obs = GroundObservation("F1", 200, "F", 70, "BD", 30)
        assert obs.metaclass == Metaclass(F, BD)

    def test_prevalence_order(self):
        with pytest.raises(DataError):
            GroundObservation("F1", 200, "F", 30, "BD", 70)
        with pytest.raises(DataError):
            GroundObservation("F1", 200, "F", 0)

    def test_non_adjacent_secondary_dropped(self):
        assert GroundObservation("F1", 200, "RE", 60, "F", 40).metaclass == Metaclass(RE)

    def test_truth_metaclass(self):
        assert truth_metaclass(0.5) == Metaclass(RE)
        assert truth_metaclass(1.1) == Metaclass(LD, RE)
        assert truth_metaclass(1.9) == Metaclass(LD, S)
        assert truth_metaclass(5.95) == Metaclass(BO)
