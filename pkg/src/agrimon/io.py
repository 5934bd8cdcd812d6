"""File ingest and emit.

Readers return an :class:`Ingested` holding the parsed object plus the
rows that could not be used (``rejects``). Structural problems (missing
file header columns, empty files, duplicate identifiers) raise instead.
Writers produce deterministic bytes: fixed float formatting, sorted JSON
keys, ``\\n`` line endings.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from shapely.geometry import mapping, shape

from .cap import ClassificationRun, CropTaxonomy, CropType
from .errors import AgrimonError, DuplicateId, EmptyInput, ParseError
from .indices import WeatherDaily
from .minicube import Cube, GridSpec, Parcel, ParcelSet
from .phenology.stages import GroundObservation
from .sits import TimeSeries


@dataclass(frozen=True)
class Reject:
    row: int  # 1-based data row (header excluded) or feature index
    reason: str


@dataclass
class Ingested:
    data: object
    rejects: list = field(default_factory=list)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# CSV plumbing


def _read_table(path, required, optional=()) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    if path.stat().st_size == 0:
        raise EmptyInput(f"{path}: file is empty")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyInput(f"{path}: file is empty") from None
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from None
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
    if df.empty:
        raise EmptyInput(f"{path}: no data rows")
    return df


_INT = re.compile(r"^-?\d+$")


def _ids(values):
    """Keep ids as strings unless every one is an integer literal."""
    vals = [v.strip() for v in values]
    if vals and all(_INT.match(v) for v in vals):
        return [int(v) for v in vals]
    return vals


def _float(text: str) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "null", "na"):
        return math.nan
    return float(text)


def fmt_float(v) -> str:
    """Shortest round-trip representation; empty for NaN."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj, key=str) if isinstance(obj, (set, frozenset)) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_rejects(path, rejects) -> Path:
    return write_csv(path, ["row", "reason"], [(r.row, r.reason) for r in rejects])


# time series


TS_COLUMNS = ("parcel_id", "day", "variable", "value")


def read_timeseries_table(path) -> Ingested:
    """Long table ``parcel_id, day, variable, value``; empty value means null."""
    df = _read_table(path, TS_COLUMNS)
    rows, rejects, seen = [], [], {}
    ids = _ids(df["parcel_id"])
    for i, (pid, day, var, val) in enumerate(zip(ids, df["day"], df["variable"], df["value"]), start=1):
        try:
            d = float(day)
            v = _float(val)
        except ValueError:
            rejects.append(Reject(i, f"unparsable day/value ({day!r}, {val!r})"))
            continue
        var = var.strip()
        if not var or math.isnan(d):
            rejects.append(Reject(i, "missing variable or day"))
            continue
        key = (pid, d, var)
        if key in seen:
            rejects.append(Reject(i, f"duplicate of row {seen[key]}"))
            continue
        seen[key] = i
        rows.append((pid, d, var, v))
    if not rows:
        raise EmptyInput(f"{path}: no usable rows")
    table = pd.DataFrame(rows, columns=list(TS_COLUMNS))
    return Ingested(table, rejects)


def table_to_series(table: pd.DataFrame) -> dict:
    """``{parcel_id: {variable: TimeSeries}}`` from a long table."""
    out: dict = {}
    for (pid, var), g in table.sort_values(["parcel_id", "variable", "day"], kind="stable").groupby(
        ["parcel_id", "variable"], sort=True
    ):
        out.setdefault(pid, {})[var] = TimeSeries(g["day"].to_numpy(), g["value"].to_numpy())
    return out


def read_timeseries(path) -> Ingested:
    got = read_timeseries_table(path)
    return Ingested(table_to_series(got.data), got.rejects)


def write_timeseries(path, table: pd.DataFrame) -> Path:
    ren = {"field_id": "parcel_id"}
    if "day" not in table.columns:
        ren["date"] = "day"
    t = table.rename(columns=ren)
    t = t.sort_values(["parcel_id", "day", "variable"], kind="stable")
    return write_csv(
        path,
        list(TS_COLUMNS),
        ((p, float(d), v, float(x)) for p, d, v, x in t[list(TS_COLUMNS)].itertuples(index=False)),
    )


# weather


def read_weather(path) -> Ingested:
    df = _read_table(path, ("day", "tmin", "tmax"))
    extras = [c for c in ("precip", "radiation", "soil_t", "soil_m", "rh", "wind") if c in df.columns]
    out, rejects, seen = [], [], {}
    for i, rec in enumerate(df.to_dict("records"), start=1):
        try:
            day = int(float(rec["day"]))
            kw = {c: _float(rec[c]) for c in extras}
            out.append(WeatherDaily(day, _float(rec["tmin"]), _float(rec["tmax"]), **kw))
        except (ValueError, AgrimonError) as exc:
            rejects.append(Reject(i, str(exc)))
            continue
        if day in seen:
            raise DuplicateId(f"{path}: day {day} appears in rows {seen[day]} and {i}")
        seen[day] = i
    if not out:
        raise EmptyInput(f"{path}: no usable rows")
    return Ingested(sorted(out, key=lambda w: w.day), rejects)


# classification runs


def read_runs(path) -> Ingested:
    """``parcel, run_day, declared, predicted, score_1..score_k`` into chronological runs."""
    df = _read_table(path, ("parcel", "run_day", "declared", "predicted"))
    score_cols = sorted((c for c in df.columns if re.fullmatch(r"score_\d+", c)), key=lambda c: int(c[6:]))
    if len(score_cols) < 2:
        raise ParseError(f"{path}: need at least columns score_1 and score_2")
    runs: dict = {}
    rejects, seen = [], {}
    ids = _ids(df["parcel"])
    for i, (pid, rec) in enumerate(zip(ids, df.to_dict("records")), start=1):
        try:
            day = float(rec["run_day"])
            scores = [_float(rec[c]) for c in score_cols]
        except ValueError:
            rejects.append(Reject(i, "unparsable run_day or score"))
            continue
        key = (pid, day)
        if key in seen:
            raise DuplicateId(f"{path}: parcel {pid} on run day {day:g} in rows {seen[key]} and {i}")
        seen[key] = i
        run = runs.setdefault(day, ClassificationRun(day))
        try:
            run.add(pid, rec["predicted"].strip(), rec["declared"].strip(), scores)
        except AgrimonError as exc:
            rejects.append(Reject(i, str(exc)))
    if not runs:
        raise EmptyInput(f"{path}: no usable rows")
    return Ingested([runs[d] for d in sorted(runs)], rejects)


def write_runs(path, runs) -> Path:
    k = max(r.n_classes or 0 for r in runs)
    rows = []
    for r in runs:
        for pid, d in r.decisions.items():
            rows.append([pid, float(r.run_day), d.declared, d.predicted, *map(float, d.scores)])
    return write_csv(path, ["parcel", "run_day", "declared", "predicted"] + [f"score_{j + 1}" for j in range(k)], rows)


def read_taxonomy(path) -> Ingested:
    df = _read_table(path, ("code", "season"), ("name", "family"))
    crops, rejects, seen = [], [], {}
    for i, rec in enumerate(df.to_dict("records"), start=1):
        code = rec["code"].strip()
        if code in seen:
            raise DuplicateId(f"{path}: crop code {code} in rows {seen[code]} and {i}")
        seen[code] = i
        try:
            crops.append(CropType(code, rec.get("name", code) or code, rec.get("family", ""), rec["season"].strip()))
        except AgrimonError as exc:
            rejects.append(Reject(i, str(exc)))
    return Ingested(CropTaxonomy(crops), rejects)


def write_taxonomy(path, taxonomy: CropTaxonomy) -> Path:
    return write_csv(path, ["code", "name", "family", "season"], ((c.code, c.name, c.family, c.season) for c in taxonomy))


# ground observations


OBS_COLUMNS = ("field_id", "day", "primary", "primary_pct", "secondary", "secondary_pct")


def read_observations(path) -> Ingested:
    df = _read_table(path, ("field_id", "day", "primary"), ("primary_pct", "secondary", "secondary_pct"))
    out, rejects, seen = [], [], {}
    ids = _ids(df["field_id"])
    for i, (fid, rec) in enumerate(zip(ids, df.to_dict("records")), start=1):
        try:
            day = float(rec["day"])
            ppct = _float(rec.get("primary_pct", "")) if rec.get("primary_pct", "") else 100.0
            sec = rec.get("secondary", "").strip() or None
            spct = _float(rec.get("secondary_pct", "")) if sec else 0.0
            obs = GroundObservation(fid, day, rec["primary"], ppct, sec, spct)
        except (ValueError, KeyError, AgrimonError) as exc:
            rejects.append(Reject(i, str(exc) or "invalid stage"))
            continue
        key = (fid, day)
        if key in seen:
            raise DuplicateId(f"{path}: field {fid} on day {day:g} in rows {seen[key]} and {i}")
        seen[key] = i
        out.append(obs)
    if not out:
        raise EmptyInput(f"{path}: no usable rows")
    return Ingested(out, rejects)


def write_observations(path, observations) -> Path:
    rows = [
        (o.field_id, float(o.day), o.primary.name, float(o.primary_pct), o.secondary.name if o.secondary else "", float(o.secondary_pct) if o.secondary else "")
        for o in observations
    ]
    return write_csv(path, list(OBS_COLUMNS), rows)


# parcels and waters


def _load_geojson(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    if path.stat().st_size == 0:
        raise EmptyInput(f"{path}: file is empty")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if not isinstance(data, dict) or data.get("type") != "FeatureCollection":
        raise ParseError(f"{path}: expected a GeoJSON FeatureCollection")
    feats = data.get("features") or []
    if not feats:
        raise EmptyInput(f"{path}: no features")
    return data


def read_parcels(path) -> Ingested:
    """Parcels with properties ``id`` plus optional ``crop_code``, ``farmer_id``, ``area_ha`` and extras."""
    data = _load_geojson(path)
    parcels, rejects, seen = [], [], {}
    for i, feat in enumerate(data["features"], start=1):
        props = dict(feat.get("properties") or {})
        if "id" not in props:
            raise ParseError(f"{path}: feature {i} lacks property 'id'")
        try:
            pid = int(props.pop("id"))
        except (TypeError, ValueError):
            raise ParseError(f"{path}: feature {i} has a non-integer id") from None
        if pid in seen:
            raise DuplicateId(f"{path}: parcel id {pid} in features {seen[pid]} and {i}")
        seen[pid] = i
        try:
            geom = shape(feat["geometry"])
            parcels.append(
                Parcel(
                    pid,
                    geom,
                    crop_code=props.pop("crop_code", None),
                    farmer_id=props.pop("farmer_id", None),
                    area_ha=props.pop("area_ha", None),
                    properties=props,
                )
            )
        except (AgrimonError, ValueError, KeyError, TypeError, AttributeError) as exc:
            rejects.append(Reject(i, f"parcel {pid}: {exc}"))
    if not parcels:
        raise EmptyInput(f"{path}: no usable parcels")
    return Ingested(ParcelSet(parcels), rejects)


def read_waters(path) -> Ingested:
    data = _load_geojson(path)
    geoms, rejects = [], []
    for i, feat in enumerate(data["features"], start=1):
        try:
            g = shape(feat["geometry"])
            if g.is_empty:
                raise ValueError("empty geometry")
            geoms.append(g)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            rejects.append(Reject(i, str(exc)))
    if not geoms:
        raise EmptyInput(f"{path}: no usable water geometry")
    return Ingested(geoms, rejects)


def write_geojson(path, features) -> Path:
    """``features``: iterable of ``(geometry, properties)``."""
    fc = {
        "type": "FeatureCollection",
        "features": [{"type": "Feature", "geometry": mapping(g), "properties": p} for g, p in features],
    }
    return write_json(path, fc)


def parcels_features(parcels: ParcelSet):
    for p in parcels.values():
        props = {"id": p.id, **p.properties}
        for k in ("crop_code", "farmer_id", "area_ha"):
            v = getattr(p, k)
            if v is not None:
                props[k] = v
        yield p.polygon, props


# cube


CUBE_HEADER = "header.json"


def cube_grid_name(date, variable) -> str:
    return f"{date}_{variable}.csv"


def read_cube(directory) -> Ingested:
    """Directory with ``header.json`` and one CSV grid per (date, variable).

    The header holds ``origin`` ([x, y] of the top-left corner),
    ``pixel_size``, ``dates`` and ``variables``. Grid files are named
    ``<date>_<variable>.csv``; empty cells are nulls.
    """
    d = Path(directory)
    hp = d / CUBE_HEADER
    if not hp.is_file():
        raise ParseError(f"{d}: missing {CUBE_HEADER}")
    try:
        head = json.loads(hp.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{hp}: {exc}") from None
    for key in ("origin", "pixel_size", "dates", "variables"):
        if key not in head:
            raise ParseError(f"{hp}: missing key {key!r}")
    dates, variables = list(head["dates"]), list(head["variables"])
    if not dates or not variables:
        raise EmptyInput(f"{hp}: no dates or variables")
    grids = []
    shape_ = None
    for date in dates:
        layer = []
        for var in variables:
            gp = d / cube_grid_name(date, var)
            if not gp.is_file():
                raise ParseError(f"{d}: missing grid {gp.name}")
            with open(gp, newline="", encoding="utf-8") as fh:
                rows = [r for r in csv.reader(fh) if r]
            try:
                arr = np.array([[_float(c) for c in r] for r in rows], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{gp}: {exc}") from None
            if arr.ndim != 2 or arr.size == 0:
                raise ParseError(f"{gp}: ragged or empty grid")
            if shape_ is None:
                shape_ = arr.shape
            elif arr.shape != shape_:
                raise ParseError(f"{gp}: shape {arr.shape} differs from {shape_}")
            layer.append(arr)
        grids.append(layer)
    ox, oy = head["origin"]
    grid = GridSpec(float(ox), float(oy), float(head["pixel_size"]), shape_[1], shape_[0])
    return Ingested(Cube(grid, tuple(dates), tuple(variables), np.array(grids)), [])


def write_cube(directory, cube: Cube) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = cube.grid
    write_json(
        d / CUBE_HEADER,
        {"origin": [g.origin_x, g.origin_y], "pixel_size": g.pixel_size, "dates": list(cube.dates), "variables": list(cube.variables)},
    )
    for t, date in enumerate(cube.dates):
        for v, var in enumerate(cube.variables):
            with open(d / cube_grid_name(date, var), "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for row in cube.values[t, v]:
                    w.writerow([fmt_float(x) for x in row])
    return d


def file_digests(paths) -> dict:
    """sha256 per input file; directories hash every file inside, sorted by name."""
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    out[os.fspath(f)] = sha256_file(f)
        elif p.is_file():
            out[os.fspath(p)] = sha256_file(p)
    return out
