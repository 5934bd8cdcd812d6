"""Deterministic demo inputs for every CLI subcommand.

``write_fixtures(directory)`` lays out small files in the ingest formats
together with ``agrimon.ini``, a config whose sections point at them.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
from shapely.geometry import box

from . import io
from .cap import DEFAULT_TAXONOMY
from .minicube import Cube, GridSpec, Parcel, ParcelSet
from .phenology.fcm_model import truth_metaclass
from .phenology.stages import Stage
from .scenarios import bob_holdings, dan_run, lucy_scene
from .synthetic import cotton_scenario, random_seasons, rice_scenario, sampling_scenario

BANDS = ("B02", "B03", "B04", "B06", "B08", "B11", "B12")

CONFIG = """\
# demo configuration; paths are relative to this file
[cube stats]
cube = cube
parcels = parcels.geojson
reducer = mean

[sits prepare]
timeseries = bands.csv
method = interpolate
step = 10

[indices]
timeseries = bands.csv
indices = ndvi, savi, evi, psri
weather = weather.csv

[pheno metrics]
timeseries = seasons.csv

[pheno estimate]
timeseries = cotton.csv
observations = cotton_obs.csv
features = NDVI, NDWI, PSRI, AGDD

[pheno continuous]
timeseries = cotton.csv
references = cotton_refs.csv
boundaries = cotton_bounds.csv
features = NDVI, NDWI
days = 190, 220, 250
train = true
min_labels = 10

[rice map]
cube = rice_cube
labels = rice_labels.csv
truth = rice_truth.csv
k_min = 5
k_max = 8
n_trees = 20

[cap sample]
runs = runs.csv
taxonomy = taxonomy.csv

[cap greening]
parcels = bob.geojson

[cap smr1]
parcels = lucy.geojson
waters = lucy_waters.geojson

[eval]
kind = classification
predictions = class_preds.csv
pred_column_b = predicted_b
"""


def _zonal_fixture(d: Path, rng):
    grid = GridSpec(500_000.0, 4_200_320.0, 10.0, 32, 32)
    dates = tuple(float(x) for x in range(120, 221, 20))
    vals = rng.uniform(0.02, 0.45, (len(dates), len(BANDS), 32, 32))
    vals[:, BANDS.index("B08")] += 0.25  # vegetated: NIR well above red
    vals[rng.random(vals.shape) < 0.03] = np.nan
    io.write_cube(d / "cube", Cube(grid, dates, BANDS, vals))
    parcels = []
    pid = 1
    for r in range(3):
        for c in range(4):
            x0 = grid.origin_x + 10 + c * 78
            y1 = grid.origin_y - 10 - r * 100
            parcels.append(Parcel(pid, box(x0, y1 - 90, x0 + 70, y1), crop_code="maize", farmer_id=f"farmer-{r}"))
            pid += 1
    io.write_geojson(d / "parcels.geojson", io.parcels_features(ParcelSet(parcels)))


def _bands_fixture(d: Path, rng):
    rows = []
    for pid in range(1, 6):
        days = np.sort(rng.choice(np.arange(100, 260), 14, replace=False)).astype(float)
        for day in days:
            for b in BANDS:
                v = float(rng.uniform(0.02, 0.4)) + (0.3 if b == "B08" else 0.0)
                rows.append((pid, day, b, v))
    rows[7] = rows[7][:3] + (float("nan"),)  # one null reading
    io.write_timeseries(d / "bands.csv", pd.DataFrame(rows, columns=list(io.TS_COLUMNS)))


def _weather_fixture(d: Path, rng):
    days = np.arange(90, 280)
    mean = 18 + 10 * np.sin((days - 110) / 365 * 2 * np.pi) + rng.normal(0, 1.5, days.size)
    amp = rng.uniform(4, 8, days.size)
    rows = [(int(t), float(m - a), float(m + a)) for t, m, a in zip(days, mean, amp)]
    io.write_csv(d / "weather.csv", ["day", "tmin", "tmax"], rows)


def _seasons_fixture(d: Path):
    rows = []
    for pid, ((ndvi, ndwi, psri), _) in enumerate(random_seasons(8, seed=5), start=1):
        for name, fs in (("NDVI", ndvi), ("NDWI", ndwi), ("PSRI", psri)):
            rows.extend((pid, float(t), name, float(v)) for t, v in zip(fs.anchors, fs.values))
    io.write_timeseries(d / "seasons.csv", pd.DataFrame(rows, columns=list(io.TS_COLUMNS)))


def _cotton_fixture(d: Path):
    sc = cotton_scenario(n_fields=40, n_dates=30, seed=1)
    io.write_timeseries(d / "cotton.csv", sc.table)
    obs = []
    for f in sc.fields:
        for day in sc.days[::3]:
            mc = truth_metaclass(float(f.progress(day)))
            sec = mc.secondary
            obs.append(
                (f.field_id, float(day), mc.primary.name, 70.0 if sec else 100.0, sec.name if sec else "", 30.0 if sec else "")
            )
    io.write_csv(d / "cotton_obs.csv", list(io.OBS_COLUMNS), obs)
    # reference parcels: a separate set of fields with known stage boundaries
    ref = cotton_scenario(n_fields=6, n_dates=30, seed=2)
    rows, bounds = [], []
    for f in ref.fields:
        for name in ("NDVI", "NDWI", "PSRI", "AGDD"):
            ts = ref.daily[f.field_id][name]
            rows.extend((f"R{f.field_id}", float(t), name, float(v)) for t, v in zip(ts.days, ts.values))
        bounds.append((f"R{f.field_id}", *map(float, f.boundaries)))
    io.write_timeseries(d / "cotton_refs.csv", pd.DataFrame(rows, columns=list(io.TS_COLUMNS)))
    io.write_csv(d / "cotton_bounds.csv", ["parcel_id", *BOUNDARY_COLUMNS], bounds)


BOUNDARY_COLUMNS = tuple(f"{s.name.lower()}_start" for s in Stage) + ("bo_end",)


def _rice_fixture(d: Path):
    sc = rice_scenario(n=40 * 50, seed=3)
    h, w = 40, 50
    days = sc.days
    ndvi = sc.X[:, : days.size].T.reshape(days.size, h, w)
    ndwi = sc.X[:, days.size :].T.reshape(days.size, h, w)
    vals = np.stack([ndvi, ndwi], axis=1)
    grid = GridSpec(300_000.0, 4_100_400.0, 10.0, w, h)
    io.write_cube(d / "rice_cube", Cube(grid, tuple(float(t) for t in days), ("NDVI", "NDWI"), vals))
    rc = np.divmod(sc.reference_idx, w)
    io.write_csv(d / "rice_labels.csv", ["row", "col", "is_rice"], zip(rc[0], rc[1], sc.reference_labels.astype(int)))
    allr, allc = np.divmod(np.arange(h * w), w)
    io.write_csv(d / "rice_truth.csv", ["row", "col", "is_rice"], zip(allr, allc, sc.is_rice.astype(int)))


def _cap_fixtures(d: Path):
    sim = sampling_scenario(n=200, n_runs=6, seed=4)
    runs = list(sim.runs)
    # append the single-run summer/winter case as its own parcel
    dan = dan_run()
    crops = [c.code for c in DEFAULT_TAXONOMY][:10]
    scores = np.full(len(crops), 0.20 / (len(crops) - 1))
    scores[crops.index("barley")] = 0.80
    for r in runs:
        r.add("dan-1", "barley", "maize", scores)
    io.write_runs(d / "runs.csv", runs)
    io.write_runs(d / "dan_runs.csv", [dan])
    io.write_taxonomy(d / "taxonomy.csv", DEFAULT_TAXONOMY)

    feats = []
    x = 0.0
    for k, (farmer, crop, area) in enumerate(bob_holdings(), start=1):
        side = (area * 10_000) ** 0.5
        feats.append((box(x, 0, x + side, side), {"id": k, "farmer_id": farmer, "crop_code": crop, "area_ha": area}))
        x += side + 5
    # a second, compliant farmer
    for k, (crop, area) in enumerate((("maize", 6.0), ("sunflower", 5.0), ("barley", 4.0)), start=10):
        side = (area * 10_000) ** 0.5
        feats.append((box(x, 0, x + side, side), {"id": k, "farmer_id": "ana", "crop_code": crop, "area_ha": area}))
        x += side + 5
    io.write_geojson(d / "bob.geojson", feats)

    poly, slope, aspect, waters = lucy_scene()
    far = box(400, 400, 480, 480)
    io.write_geojson(
        d / "lucy.geojson",
        [
            (poly, {"id": 1, "farmer_id": "lucy", "crop_code": "maize", "slope": slope, "aspect": aspect}),
            (far, {"id": 2, "farmer_id": "lucy", "crop_code": "maize", "slope": 20.0, "aspect": 90.0}),
        ],
    )
    io.write_geojson(d / "lucy_waters.geojson", [(w, {"kind": "stream"}) for w in waters])


def _eval_fixture(d: Path, rng):
    crops = ["maize", "barley", "sunflower", "alfalfa"]
    truth = rng.integers(0, len(crops), 300)
    a = np.where(rng.random(300) < 0.85, truth, rng.integers(0, len(crops), 300))
    b = np.where(rng.random(300) < 0.7, truth, rng.integers(0, len(crops), 300))
    io.write_csv(
        d / "class_preds.csv",
        ["parcel_id", "truth", "predicted", "predicted_b"],
        ((k, crops[t], crops[p], crops[q]) for k, (t, p, q) in enumerate(zip(truth, a, b))),
    )


def write_fixtures(directory, seed: int = 0) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    _zonal_fixture(d, rng)
    _bands_fixture(d, rng)
    _weather_fixture(d, rng)
    _seasons_fixture(d)
    _cotton_fixture(d)
    _rice_fixture(d)
    _cap_fixtures(d)
    _eval_fixture(d, rng)
    (d / "agrimon.ini").write_text(CONFIG, encoding="utf-8")
    return d


__all__ = ["BOUNDARY_COLUMNS", "write_fixtures"]
