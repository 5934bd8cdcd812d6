"""Command-line front door.

Every subcommand reads its settings from an INI file section named after
it (``[rice map]``, ``[cap smr1]``, ...) and from matching ``--key value``
flags, which win over the file. Unknown keys and out-of-range numbers are
config errors. Each run writes its outputs, a plain-text ``report.txt`` and
a ``manifest.json`` (config hash, seed, input digests, output digests) to the
output directory, which is ``--out``, else ``$AGRIMON_OUT``, else
``./agrimon-out``.

Exit codes: 0 success, 1 data error, 2 config error.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import __version__, io
from .errors import AgrimonError, ConfigError, DataError, InvalidParams

log = logging.getLogger("agrimon")

OUT_ENV = "AGRIMON_OUT"
DEFAULT_OUT = "agrimon-out"


# settings


@dataclass(frozen=True)
class Setting:
    name: str
    kind: str  # path | int | float | str | bool | list | choice
    default: object = None
    lo: float | None = None
    hi: float | None = None
    choices: tuple = ()
    required: bool = False
    help: str = ""
    open_lo: bool = False  # lower bound exclusive

    def parse(self, raw):
        if raw is None:
            return None
        if not isinstance(raw, str):
            value = raw
        else:
            text = raw.strip()
            if text == "" and self.kind not in ("str", "list"):
                return None
            try:
                if self.kind == "int":
                    value = int(text)
                elif self.kind == "float":
                    value = float(text)
                elif self.kind == "bool":
                    low = text.lower()
                    if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                        raise ValueError(text)
                    value = low in ("1", "true", "yes", "on")
                elif self.kind == "list":
                    value = [t.strip() for t in text.split(",") if t.strip()]
                else:
                    value = text
            except ValueError:
                raise InvalidParams(f"{self.name}: cannot read {raw!r} as {self.kind}") from None
        self.check(value)
        return value

    def check(self, value):
        if self.kind in ("int", "float"):
            if isinstance(value, float) and not math.isfinite(value):
                raise InvalidParams(f"{self.name}: must be finite")
            if self.lo is not None and (value <= self.lo if self.open_lo else value < self.lo):
                raise InvalidParams(f"{self.name}={value} must be {'>' if self.open_lo else '>='} {self.lo}")
            if self.hi is not None and value > self.hi:
                raise InvalidParams(f"{self.name}={value} must be <= {self.hi}")
        if self.kind == "choice" and value not in self.choices:
            raise InvalidParams(f"{self.name}={value!r}; choose one of {', '.join(self.choices)}")


def S(name, kind, default=None, **kw) -> Setting:
    return Setting(name, kind, default, **kw)


@dataclass(frozen=True)
class Command:
    name: str
    settings: tuple
    handler: Callable
    stochastic: Callable = lambda s: False  # noqa: E731
    help: str = ""

    def setting(self, key) -> Setting:
        for s in self.settings:
            if s.name == key:
                return s
        raise InvalidParams(f"[{self.name}] unknown key {key!r}")


@dataclass
class RunConfig:
    command: str
    settings: dict
    seed: int | None = None
    threads: int = 1

    def canonical(self) -> dict:
        return {"command": self.command, "settings": self.settings, "seed": self.seed}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_config(cmd: Command, ini_path=None, overrides=None, seed=None, threads=1) -> RunConfig:
    """Merge defaults, the INI section and flag overrides; validate everything."""
    raw: dict = {}
    base = None
    if ini_path is not None:
        ini_path = Path(ini_path)
        if not ini_path.is_file():
            raise InvalidParams(f"config file {ini_path} not found")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read(ini_path, encoding="utf-8")
        except configparser.Error as exc:
            raise InvalidParams(f"{ini_path}: {exc}") from None
        for sec in cp.sections():
            if sec not in COMMANDS:
                raise InvalidParams(f"{ini_path}: unknown section [{sec}]")
        if cp.has_section(cmd.name):
            base = ini_path.resolve().parent
            for k, v in cp.items(cmd.name):
                key = k.replace("-", "_")
                cmd.setting(key)
                raw[key] = ("ini", v)
    for k, v in (overrides or {}).items():
        if v is not None:
            cmd.setting(k)
            raw[k] = ("cli", v)
    if threads < 1:
        raise InvalidParams("--threads must be >= 1")
    values = {}
    for s in cmd.settings:
        src, v = raw.get(s.name, (None, None))
        val = s.parse(v) if v is not None else s.default
        if val is None and s.required:
            raise InvalidParams(f"[{cmd.name}] missing required key {s.name!r}")
        if s.kind == "path" and val is not None:
            p = Path(val)
            if src == "ini" and not p.is_absolute():
                p = base / p
            val = os.fspath(p.resolve())
        values[s.name] = val
    cfg = RunConfig(cmd.name, values, seed, threads)
    if cmd.stochastic(values) and seed is None:
        raise InvalidParams(f"{cmd.name} is stochastic: --seed is required")
    return cfg


# run context


class Run:
    """Collects outputs, rejects and summary lines of one command."""

    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.cfg = cfg
        self.s = cfg.settings
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.inputs: list[str] = []
        self.lines: list[str] = []

    @property
    def threads(self) -> int:
        return self.cfg.threads

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def ingest(self, reader, key: str):
        path = self.s[key]
        self.inputs.append(path)
        got = reader(path)
        if got.rejects:
            self.reject(key, got.rejects)
        return got.data

    def reject(self, tag: str, rejects):
        if rejects:
            name = f"rejects_{tag}.csv"
            io.write_rejects(self.out / name, rejects)
            self._add(name)
            self.say(f"{len(rejects)} {tag} row(s) rejected, see {name}")

    def _add(self, name):
        if name not in self.outputs:
            self.outputs.append(name)

    def csv(self, name, header, rows):
        io.write_csv(self.out / name, header, rows)
        self._add(name)

    def timeseries(self, name, table):
        io.write_timeseries(self.out / name, table)
        self._add(name)

    def json(self, name, obj):
        io.write_json(self.out / name, obj)
        self._add(name)

    def geojson(self, name, features):
        io.write_geojson(self.out / name, features)
        self._add(name)

    def say(self, line: str = ""):
        self.lines.append(line)

    def table(self, header, rows):
        rows = [[_cell(v) for v in r] for r in rows]
        widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
        self.say("  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
        for r in rows:
            self.say("  ".join(c.ljust(w) for c, w in zip(r, widths)))


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{v:.4g}"
    return str(v)


def finish(run: Run) -> dict:
    cfg = run.cfg
    report = [f"agrimon {cfg.command}", ""] + run.lines + ["", "machine outputs:"] + [f"  {n}" for n in run.outputs]
    (run.out / "report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    run._add("report.txt")
    manifest = {
        "agrimon_version": __version__,
        "command": cfg.command,
        "settings": cfg.settings,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "config_hash": cfg.digest(),
        "inputs": io.file_digests(sorted(set(run.inputs))),
        "outputs": {n: io.sha256_file(run.out / n) for n in sorted(run.outputs)},
    }
    io.write_json(run.out / "manifest.json", manifest)
    return manifest


# helpers


def to_day(date) -> float:
    """Cube date label to day of year: numbers pass through, ISO dates convert."""
    if isinstance(date, (int, float, np.integer, np.floating)):
        return float(date)
    text = str(date)
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return float(_dt.date.fromisoformat(text[:10]).timetuple().tm_yday)
    except ValueError:
        raise DataError(f"cube date {text!r} is neither a number nor an ISO date") from None


def _pick(series: dict, name: str):
    """Case-insensitive variable lookup."""
    for k, v in series.items():
        if k.upper() == name.upper():
            return v
    return None


def _read_flags(path, key="is_rice") -> pd.DataFrame:
    df = io._read_table(path, ("row", "col", key))
    try:
        out = pd.DataFrame(
            {
                "row": df["row"].astype(int),
                "col": df["col"].astype(int),
                key: df[key].str.strip().str.lower().map({"1": True, "0": False, "true": True, "false": False}),
            }
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if out[key].isna().any():
        raise DataError(f"{path}: {key} must be 0/1 or true/false")
    return out


# handlers


def cmd_cube_stats(run: Run):
    from .minicube import inward_buffer, rasterize_parcels, zonal_stats

    cube = run.ingest(io.read_cube, "cube")
    parcels = run.ingest(io.read_parcels, "parcels")
    ids = rasterize_parcels(parcels, cube.grid)
    if run.s["inward_buffer"]:
        ids = inward_buffer(ids, run.s["inward_buffer"])
    df = zonal_stats(cube, ids, run.s["reducer"], run.s["mode"], parcel_ids=list(parcels), workers=run.threads)
    df["day"] = [to_day(d) for d in df.pop("date")]
    run.timeseries("zonal.csv", df)
    run.say(f"{len(parcels)} parcels x {len(cube.dates)} dates x {len(cube.variables)} variables, reducer {run.s['reducer']}")
    run.say(f"null values: {int(df['value'].isna().sum())} of {len(df)}")


def cmd_sits_prepare(run: Run):
    from .sits import interpolate_fixed_step, resample_window_mean

    table = run.ingest(io.read_timeseries_table, "timeseries")
    series = io.table_to_series(table)
    s = run.s
    start = s["start"] if s["start"] is not None else float(table["day"].min())
    end = s["end"] if s["end"] is not None else float(table["day"].max())
    if end < start:
        raise InvalidParams("end must not precede start")
    anchors = start + s["step"] * np.arange(int(math.floor((end - start) / s["step"])) + 1)
    rows, rejects = [], []
    for pid, per in series.items():
        for var, ts in per.items():
            try:
                if s["method"] == "interpolate":
                    fs = interpolate_fixed_step(ts, anchors, s["window_radius"])
                else:
                    fs = resample_window_mean(ts, s["step"], start)
            except DataError as exc:
                rejects.append(io.Reject(0, f"parcel {pid} {var}: {exc}"))
                continue
            rows.extend((pid, float(a), var, float(v)) for a, v in zip(fs.anchors, fs.values))
    run.reject("series", rejects)
    run.timeseries("prepared.csv", pd.DataFrame(rows, columns=list(io.TS_COLUMNS)))
    run.say(f"{sum(len(p) for p in series.values()) - len(rejects)} series mapped to {s['method']} step {s['step']:g} days")


def cmd_indices(run: Run):
    from .indices import accumulated_gdd, compute_index, gdd, required_bands

    s = run.s
    if s["timeseries"] is None and s["weather"] is None:
        raise InvalidParams("[indices] needs timeseries, weather or both")
    if s["timeseries"] is not None:
        names = [n.upper() for n in s["indices"]]
        for n in names:
            required_bands(n)  # unknown names fail as config errors
        table = run.ingest(io.read_timeseries_table, "timeseries")
        wide = table.set_index(["parcel_id", "day", "variable"])["value"].unstack("variable")
        sample = {c: wide[c].to_numpy() for c in wide.columns}
        frames = []
        for n in names:
            v = compute_index(n, sample)
            frames.append(pd.DataFrame({"parcel_id": wide.index.get_level_values(0), "day": wide.index.get_level_values(1), "variable": n, "value": v}))
        out = pd.concat(frames, ignore_index=True)
        run.timeseries("indices.csv", out)
        run.say(f"indices {', '.join(names)} on {len(wide)} parcel-days; {int(out['value'].isna().sum())} null results")
    if s["weather"] is not None:
        weather = run.ingest(io.read_weather, "weather")
        days = np.array([w.day for w in weather], dtype=np.float64)
        tmax = np.array([w.tmax for w in weather])
        tmin = np.array([w.tmin for w in weather])
        daily = gdd(tmax, tmin, s["tbase"])
        acc = accumulated_gdd(days, tmax, tmin, s["start_day"], s["tbase"])
        run.csv("gdd.csv", ["day", "gdd", "agdd"], zip(days.astype(int), daily.astype(float), acc.astype(float)))
        run.say(f"GDD over {days.size} days (base {s['tbase']:g} C), AGDD from day {s['start_day']:g}: {acc[-1]:.1f}")


METRIC_FIELDS = ("sos", "pos", "eos", "rate_inc", "rate_dec", "large_integral", "small_integral", "biomass_indicator", "yield_indicator", "base_level")


def cmd_pheno_metrics(run: Run):
    from .pheno_metrics import season_from_raw
    from .sits import interpolate_fixed_step

    s = run.s
    series = io.table_to_series(run.ingest(io.read_timeseries_table, "timeseries"))
    rows, rejects = [], []
    for pid, per in series.items():
        try:
            trio = [_pick(per, n) for n in ("NDVI", "NDWI", "PSRI")]
            if any(t is None for t in trio):
                raise DataError("needs NDVI, NDWI and PSRI")
            days = np.unique(np.concatenate([t.valid().days for t in trio]))
            anchors = days[0] + s["step"] * np.arange(int((days[-1] - days[0]) // s["step"]) + 1)
            fixed = [interpolate_fixed_step(t, anchors, s["step"] / 2) for t in trio]
            m = season_from_raw(*fixed, window=s["window"], order=s["order"], despike=s["despike"])
        except DataError as exc:
            rejects.append(io.Reject(0, f"parcel {pid}: {exc}"))
            continue
        rows.append((pid, *(float(getattr(m, f)) for f in METRIC_FIELDS)))
    run.reject("parcels", rejects)
    run.csv("metrics.csv", ["parcel_id", *METRIC_FIELDS], rows)
    run.table(["parcel_id", "sos", "pos", "eos", "small_integral"], [(r[0], r[1], r[2], r[3], r[7]) for r in rows])


def _prediction_rows(space, preds):
    from .phenology.stages import Stage

    for fid, day, p in zip(space.field_ids, space.days, preds):
        mc = p.metaclass
        yield (
            fid,
            float(day),
            mc.index,
            mc.label,
            mc.primary.name,
            mc.secondary.name if mc.secondary else "",
            *(float(p.weights[st]) for st in Stage),
        )


PRED_HEADER = ["field_id", "day", "metaclass", "label", "primary", "secondary", "w_RE", "w_LD", "w_S", "w_F", "w_BD", "w_BO"]


def cmd_pheno_estimate(run: Run):
    from .phenology import baseline_doy, build_element_space, ensemble_vote, eval_phenology, fit_ensemble, fit_phenology

    s = run.s
    table = run.ingest(io.read_timeseries_table, "timeseries")
    feats = list(s["features"])
    space = build_element_space(table, feats)
    if space.dropped:
        run.reject("elements", [io.Reject(0, f"field {f} day {d:g}: missing {', '.join(m)}") for f, d, m in space.dropped])
    kw = dict(c=6, m=s["m"], percentile=s["percentile"], n_init=s["n_init"], max_iter=s["max_iter"])
    feature_sets = [[f.strip() for f in grp.split(",") if f.strip()] for grp in s["feature_sets"].split(";") if grp.strip()]
    frame = space.frame()
    if feature_sets:
        models = fit_ensemble(space, [tuple(fs) + ("doy_sin", "doy_cos") for fs in feature_sets], run.seed, **kw)
        preds = [ensemble_vote(models, frame.iloc[[i]]) for i in range(len(frame))]
        info = {"models": len(models), "th_w": [m.th_w for m in models]}
    else:
        model = fit_phenology(space, run.seed, **kw)
        preds = model.predict(frame)
        info = {"th_w": model.th_w, "stage_order": [st.name for st in model.stage_order], "objective": list(model.fcm.objective)[-1]}
    run.csv("predictions.csv", PRED_HEADER, _prediction_rows(space, preds))
    summary = {"elements": int(space.dataset.n), "dropped": len(space.dropped), "features": feats, **info}
    counts = pd.Series([p.metaclass.label for p in preds]).value_counts().sort_index()
    run.say(f"{space.dataset.n} (field, day) elements, features {', '.join(feats)}")
    run.table(["metaclass", "elements"], list(counts.items()))
    if s["observations"] is not None:
        obs = run.ingest(io.read_observations, "observations")
        idx = {(f, float(d)): i for i, (f, d) in enumerate(zip(space.field_ids, space.days))}
        hit = [(idx[(o.field_id, float(o.day))], o) for o in obs if (o.field_id, float(o.day)) in idx]
        miss = [o for o in obs if (o.field_id, float(o.day)) not in idx]
        run.reject("observations", [io.Reject(0, f"field {o.field_id} day {o.day:g}: no matching element") for o in miss])
        if hit:
            ev = eval_phenology([preds[i] for i, _ in hit], [o.metaclass for _, o in hit])
            summary["eval"] = ev
            base = baseline_doy(space, run.seed, **kw).predict(frame)
            summary["eval_baseline_doy"] = eval_phenology([base[i] for i, _ in hit], [o.metaclass for _, o in hit])
            run.say("")
            run.table(
                ["model", "maxdiff-0", "maxdiff-1", "kappa", "ndcg@2"],
                [
                    ("fitted", ev["maxdiff-0"], ev["maxdiff-1"], ev["kappa"], ev["ndcg@2"]),
                    ("doy only", summary["eval_baseline_doy"]["maxdiff-0"], summary["eval_baseline_doy"]["maxdiff-1"],
                     summary["eval_baseline_doy"]["kappa"], summary["eval_baseline_doy"]["ndcg@2"]),
                ],
            )
    run.json("summary.json", summary)


def _boundaries(path) -> dict:
    from .fixtures import BOUNDARY_COLUMNS

    df = io._read_table(path, ("parcel_id", *BOUNDARY_COLUMNS))
    out = {}
    for pid, rec in zip(io._ids(df["parcel_id"]), df.to_dict("records")):
        if pid in out:
            raise io.DuplicateId(f"{path}: reference {pid} listed twice")
        try:
            out[pid] = [float(rec[c]) for c in BOUNDARY_COLUMNS]
        except ValueError:
            raise DataError(f"{path}: reference {pid} has a non-numeric boundary") from None
    return out


def cmd_pheno_continuous(run: Run):
    from .phenology import ReferenceParcel, predict_continuous, train_stage_regressors

    s = run.s
    feats = list(s["features"])
    table = run.ingest(io.read_timeseries_table, "timeseries")
    query = io.table_to_series(table)
    ref_series = io.table_to_series(run.ingest(io.read_timeseries_table, "references"))
    run.inputs.append(s["boundaries"])
    bounds = _boundaries(s["boundaries"])
    refs = []
    for pid, b in bounds.items():
        if pid not in ref_series:
            raise DataError(f"reference {pid} has boundaries but no series")
        try:
            refs.append(ReferenceParcel.from_boundaries(pid, {f: _need(ref_series[pid], f, pid) for f in feats}, b))
        except ValueError as exc:
            raise DataError(f"reference {pid}: {exc}") from None
    days = [float(d) for d in s["days"]] if s["days"] else sorted(float(d) for d in table["day"].unique())
    rows, rejects = [], []
    labels = {d: np.full(len(query), np.nan) for d in days}
    pids = list(query)
    for k, pid in enumerate(pids):
        try:
            fs = {f: _need(query[pid], f, pid) for f in feats}
        except DataError as exc:
            rejects.append(io.Reject(0, str(exc)))
            continue
        for d in days:
            try:
                cs = predict_continuous(fs, refs, d, tw=s["tw"], s=s["s"], top=s["top"])
            except DataError as exc:
                rejects.append(io.Reject(0, f"parcel {pid} day {d:g}: {exc}"))
                continue
            labels[d][k] = cs.value
            rows.append((pid, d, float(cs.value), cs.stage.name, float(cs.completion)))
    run.reject("predictions", rejects)
    run.csv("continuous.csv", ["parcel_id", "day", "value", "stage", "completion"], rows)
    run.say(f"{len(rows)} continuous-stage estimates over {len(pids)} parcels and {len(days)} days from {len(refs)} references")
    if s["train"]:
        wide = table[table["variable"].isin(feats)].pivot_table(index="parcel_id", columns=["day", "variable"], values="value", aggfunc="first")
        obs_days = np.array(sorted(table["day"].unique()), dtype=np.float64)
        wide = wide.reindex(columns=pd.MultiIndex.from_product([obs_days, feats])).reindex(pids)
        cube = wide.to_numpy(dtype=np.float64).reshape(len(pids), obs_days.size, len(feats))
        ok = ~np.isnan(cube).any(axis=(1, 2))
        run.reject("training", [io.Reject(0, f"parcel {p}: incomplete series") for p, g in zip(pids, ok) if not g])
        regs = train_stage_regressors(
            cube[ok], obs_days, feats, {d: v[ok] for d, v in labels.items()},
            n_trees=s["n_trees"], min_labels=s["min_labels"], seed=run.seed, workers=run.threads,
        )
        run.csv("regressors.csv", ["day", "depth", "holdout_mae", "n_labels"], ((r.day, r.depth, r.holdout_mae, r.n_labels) for r in regs.regressors))
        if regs.skipped:
            run.csv("regressors_skipped.csv", ["day", "n_labels", "reason"], ((k.day, k.n_labels, k.reason) for k in regs.skipped))
        run.table(["day", "depth", "holdout MAE", "labels"], [(f"{r.day:g}", r.depth, r.holdout_mae, r.n_labels) for r in regs.regressors])


def _need(per: dict, f: str, pid):
    ts = _pick(per, f)
    if ts is None:
        raise DataError(f"parcel {pid} lacks feature {f}")
    return ts


def cmd_rice_map(run: Run):
    from .ml.dataset import Dataset
    from .rice import run_rice_pipeline

    s = run.s
    if s["k_min"] > s["k_max"]:
        raise InvalidParams("k_min must not exceed k_max")
    cube = run.ingest(io.read_cube, "cube")
    names = {v.upper(): i for i, v in enumerate(cube.variables)}
    if "NDVI" not in names:
        raise DataError("rice cube needs an NDVI variable")
    use = [v for v in ("NDVI", "NDWI") if v in names]
    h, w = cube.grid.height, cube.grid.width
    cols = [f"{v}_{to_day(d):g}" for v in use for d in cube.dates]
    X = np.concatenate([cube.values[:, names[v]].reshape(len(cube.dates), -1).T for v in use], axis=1)
    valid = ~np.isnan(X).any(axis=1)
    run.reject("pixels", [io.Reject(int(i), f"pixel row {i // w} col {i % w}: null value") for i in np.nonzero(~valid)[0]])
    pix = np.nonzero(valid)[0]
    pos = np.full(h * w, -1)
    pos[pix] = np.arange(pix.size)
    ds = Dataset(X[valid], None, tuple(cols))

    run.inputs.append(s["labels"])
    lab = _read_flags(s["labels"])
    flat = lab["row"].to_numpy() * w + lab["col"].to_numpy()
    inside = (lab["row"].between(0, h - 1) & lab["col"].between(0, w - 1)).to_numpy()
    flat = np.where(inside, flat, 0)
    keep = inside & (pos[flat] >= 0)
    run.reject("labels", [io.Reject(i + 1, "label outside the grid or on a null pixel") for i in np.nonzero(~keep)[0]])
    ref_rows = pos[flat[keep]]
    ref_is = lab["is_rice"].to_numpy()[keep]
    truth = None
    if s["truth"] is not None:
        run.inputs.append(s["truth"])
        tr = _read_flags(s["truth"])
        grid_truth = np.full(h * w, -1)
        grid_truth[tr["row"].to_numpy() * w + tr["col"].to_numpy()] = tr["is_rice"].to_numpy().astype(int)
        t = grid_truth[pix]
        if (t < 0).any():
            raise DataError("truth does not cover every valid pixel")
        truth = t.astype(bool)
    pixel_area = s["pixel_area_ha"] if s["pixel_area_ha"] is not None else cube.grid.pixel_size**2 / 10_000.0
    res = run_rice_pipeline(
        ds, ref_rows, ref_is, s["k_min"], s["k_max"], run.seed, s["n_trees"], s["depth"], pixel_area, truth, run.threads, s["water_ndvi_max"]
    )
    grid = np.full(h * w, "", dtype=object)
    grid[pix] = np.where(res.map.labels, "1", "0")
    io.write_csv(run.out / "rice_map.csv", [f"c{j}" for j in range(w)], grid.reshape(h, w).tolist())
    run._add("rice_map.csv")
    xs, ys = cube.grid.pixel_centers()
    rr, cc = np.divmod(pix, w)
    run.csv("rice_pixels.csv", ["row", "col", "x", "y", "rice"], zip(rr, cc, xs.ravel()[pix].astype(float), ys.ravel()[pix].astype(float), res.map.labels.astype(int)))
    metrics = {
        "k": res.best.k,
        "candidates": [c.__dict__ for c in res.sweep.candidates],
        "land_pixels": int(res.land_mask.sum()),
        "rice_pixels": int(res.map.labels.sum()),
        "rice_area_ha": res.map.total_area_ha,
        **res.map.metrics,
    }
    run.json("metrics.json", metrics)
    if s["parcels"] is not None:
        from .minicube import rasterize_parcels

        parcels = run.ingest(io.read_parcels, "parcels")
        ids = rasterize_parcels(parcels, cube.grid).ids.ravel()
        rice_flat = np.zeros(h * w)
        rice_flat[pix] = res.map.labels
        feats = []
        for pid, p in parcels.items():
            sel = (ids == pid) & (pos >= 0)
            share = float(rice_flat[sel].mean()) if sel.any() else float("nan")
            feats.append((p.polygon, {"id": pid, "rice_share": None if math.isnan(share) else share, "pixels": int(sel.sum())}))
        run.geojson("rice_parcels.geojson", feats)
    run.table(["k", "precision", "recall", "f1"], [(c.k, c.precision, c.recall, c.f1) for c in res.sweep.candidates])
    run.say(f"selected k = {res.best.k}; rice pixels {metrics['rice_pixels']} ({res.map.total_area_ha:.2f} ha)")
    for part in ("pseudo", "map"):
        if part in res.map.metrics:
            m = res.map.metrics[part]
            run.say(f"{part} vs truth: precision {m['precision']:.4f} recall {m['recall']:.4f} F1 {m['f1']:.4f}")


def cmd_cap_sample(run: Run):
    from .cap import DEFAULT_TAXONOMY, Bands, mismatch_counts, persistence_threshold, season_filter, traffic_light

    s = run.s
    bands = Bands(s["green"], s["yellow"], s["red"])
    runs = run.ingest(io.read_runs, "runs")
    taxonomy = run.ingest(io.read_taxonomy, "taxonomy") if s["taxonomy"] is not None else DEFAULT_TAXONOMY
    parcels = sorted({p for r in runs for p in r.decisions}, key=str)
    present = [p for p in parcels if all(p in r.decisions for r in runs)]
    run.reject("parcels", [io.Reject(0, f"parcel {p}: absent from some runs") for p in parcels if p not in set(present)])
    mis = mismatch_counts(runs, bands, present)
    pt = persistence_threshold(len(runs))
    alarms = {p for p, m in mis.items() if m >= pt and m > 0}
    kept = season_filter(alarms, runs[-1], taxonomy) if s["season_filter"] else alarms
    last = runs[-1]
    rows = []
    for p in present:
        d = last.decisions[p]
        rows.append((p, mis[p], pt, int(p in alarms), int(p in kept), d.declared, d.predicted, traffic_light(d.scores, bands).value))
    header = ["parcel", "mismatches", "threshold", "alarm", "kept", "declared", "predicted", "light"]
    run.csv("alarms.csv", header, rows)
    if s["parcels"] is not None:
        geoms = run.ingest(io.read_parcels, "parcels")
        feats = []
        for r in rows:
            key = r[0]
            if isinstance(key, str) and key.isdigit():
                key = int(key)
            if key in geoms:
                feats.append((geoms[key].polygon, dict(zip(header, r))))
        run.geojson("alarms.geojson", feats)
    run.say(f"{len(runs)} runs, {len(present)} parcels, persistence threshold {pt}")
    run.say(f"alarms: {len(alarms)}; kept after season filter: {len(kept)}" if s["season_filter"] else f"alarms: {len(alarms)}")
    run.table(["parcel", "mismatches", "declared", "predicted"], [(r[0], r[1], r[5], r[6]) for r in rows if r[4]])


def cmd_cap_greening(run: Run):
    from .cap import greening1_check

    s = run.s
    parcels = run.ingest(io.read_parcels, "parcels")
    holdings, rejects = [], []
    for pid, p in parcels.items():
        if p.farmer_id is None or p.crop_code is None:
            rejects.append(io.Reject(0, f"parcel {pid}: farmer_id and crop_code are required"))
            continue
        holdings.append((p.farmer_id, p.crop_code, float(p.area_ha)))
    run.reject("parcels", rejects)
    verdicts = greening1_check(holdings, s["small_ha"], s["large_ha"])
    header = ["farmer_id", "status", "reason", "total_ha", "n_crops", "main_share", "top2_share"]
    rows = [(v.farmer_id, v.status, v.reason, v.total_ha, v.n_crops, v.main_share, v.top2_share) for _, v in sorted(verdicts.items(), key=lambda kv: str(kv[0]))]
    run.csv("greening.csv", header, rows)
    feats = []
    for pid, p in parcels.items():
        if p.farmer_id in verdicts:
            v = verdicts[p.farmer_id]
            feats.append((p.polygon, {"id": pid, "farmer_id": p.farmer_id, "crop_code": p.crop_code, "area_ha": p.area_ha, "verdict": v.status}))
    run.geojson("greening.geojson", feats)
    run.table(["farmer", "verdict", "total ha", "crops", "main share"], [(r[0], r[1], r[3], r[4], r[5]) for r in rows])


def cmd_cap_smr1(run: Run):
    from .cap import smr1_check

    s = run.s
    parcels = run.ingest(io.read_parcels, "parcels")
    waters = run.ingest(io.read_waters, "waters")
    rows, feats, rejects = [], [], []
    for pid, p in parcels.items():
        try:
            slope, aspect = float(p.properties["slope"]), float(p.properties["aspect"])
        except (KeyError, TypeError, ValueError):
            rejects.append(io.Reject(0, f"parcel {pid}: numeric slope and aspect properties are required"))
            continue
        a = smr1_check(p.polygon, slope, aspect, waters, s["buffer_m"], s["min_slope"], s["half_window"])
        bearing = float("nan") if a.bearing_deg is None else a.bearing_deg
        rows.append((pid, a.risk, a.distance_m, bearing, a.slope, a.aspect))
        feats.append((p.polygon, {"id": pid, "risk": a.risk, "distance_m": a.distance_m, "bearing_deg": a.bearing_deg, "slope": a.slope, "aspect": a.aspect}))
    run.reject("parcels", rejects)
    run.csv("smr1.csv", ["parcel_id", "risk", "distance_m", "bearing_deg", "slope", "aspect"], rows)
    run.geojson("smr1.geojson", feats)
    run.table(["parcel", "risk", "distance m", "bearing", "aspect"], [(r[0], r[1], r[2], r[3], r[5]) for r in rows])


def cmd_eval(run: Run):
    from .ml.metrics import ConfusionMatrix, classification_metrics, mcnemar

    s = run.s
    if s["kind"] == "classification":
        run.inputs.append(s["predictions"])
        cols = [s["truth_column"], s["pred_column"]] + ([s["pred_column_b"]] if s["pred_column_b"] else [])
        df = io._read_table(s["predictions"], cols)
        cm = ConfusionMatrix.from_labels(df[cols[0]].to_numpy(), df[cols[1]].to_numpy())
        out = classification_metrics(cm)
        out["labels"] = list(cm.labels)
        out["confusion"] = cm.counts
        run.say(f"n = {int(cm.total)}; overall accuracy {out['overall_accuracy']:.4f}; kappa {out['kappa']:.4f}")
        run.table(["class", "PA", "UA", "F1"], [(k, v["PA"], v["UA"], v["F1"]) for k, v in out["per_class"].items()])
        if s["pred_column_b"]:
            t, a, b = (df[c].to_numpy() for c in cols)
            n_ab = int(((a == t) & (b != t)).sum())
            n_ba = int(((a != t) & (b == t)).sum())
            out["mcnemar"] = {"n_ab": n_ab, "n_ba": n_ba, "chi2": mcnemar(n_ab, n_ba)}
            run.say(f"McNemar {cols[1]} vs {cols[2]}: n_ab {n_ab}, n_ba {n_ba}, chi2 {out['mcnemar']['chi2']:.2f}")
    else:
        from .phenology import eval_phenology
        from .phenology.fcm_model import metaclass_from_weights

        if s["observations"] is None:
            raise InvalidParams("[eval] kind=phenology needs observations")
        run.inputs.append(s["predictions"])
        df = io._read_table(s["predictions"], PRED_HEADER)
        obs = run.ingest(io.read_observations, "observations")
        weights = df[PRED_HEADER[6:]].astype(float).to_numpy()
        idx = {(f, float(d)): i for i, (f, d) in enumerate(zip(io._ids(df["field_id"]), df["day"].astype(float)))}
        pairs = [(idx[(o.field_id, float(o.day))], o) for o in obs if (o.field_id, float(o.day)) in idx]
        if not pairs:
            raise DataError("no observation matches a prediction")
        from .phenology.stages import Metaclass

        preds = []
        for i, _ in pairs:
            p = metaclass_from_weights(weights[i], 0.0)
            preds.append(type(p)(Metaclass.from_index(int(df["metaclass"].iloc[i])), p.ranking, p.weights))
        out = eval_phenology(preds, [o.metaclass for _, o in pairs])
        run.say(f"{len(pairs)} matched observations")
        run.table(["metric", "value"], [(k, v) for k, v in out.items() if not isinstance(v, dict)])
    run.json("eval.json", out)


# registry


def _seeded(s) -> bool:
    return True


COMMANDS: dict[str, Command] = {}


def _register(*cmds):
    for c in cmds:
        COMMANDS[c.name] = c


_register(
    Command(
        "cube stats",
        (
            S("cube", "path", required=True, help="cube directory"),
            S("parcels", "path", required=True, help="parcels GeoJSON"),
            S("reducer", "choice", "mean", choices=("mean", "min", "max", "count")),
            S("mode", "choice", "groupby", choices=("groupby", "serial")),
            S("inward_buffer", "int", 0, lo=0, hi=50, help="erode parcels by this many pixels"),
        ),
        cmd_cube_stats,
        help="zonal statistics of a cube over parcels",
    ),
    Command(
        "sits prepare",
        (
            S("timeseries", "path", required=True),
            S("method", "choice", "interpolate", choices=("interpolate", "resample")),
            S("step", "float", 10.0, lo=0, hi=366, open_lo=True),
            S("window_radius", "float", 5.0, lo=0, hi=183),
            S("start", "float", None, lo=-366, hi=732),
            S("end", "float", None, lo=-366, hi=732),
        ),
        cmd_sits_prepare,
        help="map irregular series onto a fixed step",
    ),
    Command(
        "indices",
        (
            S("timeseries", "path", help="band reflectances in the time-series layout"),
            S("indices", "list", ["NDVI"]),
            S("weather", "path"),
            S("tbase", "float", 15.6, lo=-20, hi=50),
            S("start_day", "float", 100.0, lo=1, hi=366),
        ),
        cmd_indices,
        help="vegetation indices and growing degree days",
    ),
    Command(
        "pheno metrics",
        (
            S("timeseries", "path", required=True),
            S("step", "float", 10.0, lo=1, hi=60),
            S("window", "int", 5, lo=3, hi=31),
            S("order", "int", 2, lo=0, hi=6),
            S("despike", "bool", True),
        ),
        cmd_pheno_metrics,
        help="season start, peak, end and integrals per parcel",
    ),
    Command(
        "pheno estimate",
        (
            S("timeseries", "path", required=True),
            S("features", "list", ["NDVI", "NDWI", "PSRI", "AGDD"]),
            S("feature_sets", "str", "", help="semicolon-separated feature groups for an ensemble"),
            S("m", "float", 2.0, lo=1.0, hi=10.0, open_lo=True),
            S("percentile", "float", 98.0, lo=50.0, hi=100.0),
            S("n_init", "int", 5, lo=1, hi=100),
            S("max_iter", "int", 300, lo=1, hi=100_000),
            S("observations", "path"),
        ),
        cmd_pheno_estimate,
        stochastic=_seeded,
        help="fuzzy metaclass model of phenological stages",
    ),
    Command(
        "pheno continuous",
        (
            S("timeseries", "path", required=True),
            S("references", "path", required=True),
            S("boundaries", "path", required=True),
            S("features", "list", ["NDVI", "NDWI"]),
            S("days", "list", []),
            S("tw", "float", 75.0, lo=5, hi=200),
            S("s", "float", 5.0, lo=1, hi=60),
            S("top", "int", 3, lo=1, hi=100),
            S("train", "bool", False),
            S("n_trees", "int", 30, lo=1, hi=1000),
            S("min_labels", "int", 50, lo=2, hi=1_000_000),
        ),
        cmd_pheno_continuous,
        stochastic=lambda s: bool(s.get("train")),
        help="continuous stage scale by reference matching",
    ),
    Command(
        "rice map",
        (
            S("cube", "path", required=True),
            S("labels", "path", required=True),
            S("truth", "path"),
            S("parcels", "path"),
            S("k_min", "int", 5, lo=2, hi=100),
            S("k_max", "int", 15, lo=2, hi=100),
            S("n_trees", "int", 50, lo=1, hi=1000),
            S("depth", "int", 12, lo=1, hi=64),
            S("pixel_area_ha", "float", None, lo=0, hi=1e6, open_lo=True),
            S("water_ndvi_max", "float", 0.2, lo=-1, hi=1),
        ),
        cmd_rice_map,
        stochastic=_seeded,
        help="weakly supervised paddy rice map",
    ),
    Command(
        "cap sample",
        (
            S("runs", "path", required=True),
            S("taxonomy", "path"),
            S("parcels", "path"),
            S("green", "float", 0.5, lo=0, hi=1),
            S("yellow", "float", 0.3, lo=0, hi=1),
            S("red", "float", 0.15, lo=0, hi=1),
            S("season_filter", "bool", True),
        ),
        cmd_cap_sample,
        help="select parcels for field inspection",
    ),
    Command(
        "cap greening",
        (
            S("parcels", "path", required=True),
            S("small_ha", "float", 10.0, lo=0),
            S("large_ha", "float", 30.0, lo=0),
        ),
        cmd_cap_greening,
        help="crop diversification per farmer",
    ),
    Command(
        "cap smr1",
        (
            S("parcels", "path", required=True),
            S("waters", "path", required=True),
            S("buffer_m", "float", 10.0, lo=0, hi=10_000),
            S("min_slope", "float", 12.0, lo=0, hi=90),
            S("half_window", "float", 45.0, lo=0, hi=180, open_lo=True),
        ),
        cmd_cap_smr1,
        help="nitrate runoff risk near surface water",
    ),
    Command(
        "eval",
        (
            S("kind", "choice", "classification", choices=("classification", "phenology")),
            S("predictions", "path", required=True),
            S("observations", "path"),
            S("truth_column", "str", "truth"),
            S("pred_column", "str", "predicted"),
            S("pred_column_b", "str", ""),
        ),
        cmd_eval,
        help="accuracy of crop or phenology predictions",
    ),
)


# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agrimon", description="Agriculture monitoring toolkit")
    p.add_argument("--version", action="version", version=f"agrimon {__version__}")
    top = p.add_subparsers(dest="group", required=True)
    groups: dict = {}
    for name, cmd in COMMANDS.items():
        parts = name.split()
        if len(parts) == 1:
            sp = top.add_parser(name, help=cmd.help)
        else:
            if parts[0] not in groups:
                g = top.add_parser(parts[0], help=f"{parts[0]} commands")
                groups[parts[0]] = g.add_subparsers(dest="sub", required=True)
            sp = groups[parts[0]].add_parser(parts[1], help=cmd.help)
        sp.set_defaults(command=name)
        _common(sp)
        for s in cmd.settings:
            flag = "--" + s.name.replace("_", "-")
            extra = f" (default {s.default})" if s.default not in (None, "", []) else ""
            sp.add_argument(flag, dest=f"set_{s.name}", default=None, metavar=s.kind.upper(), help=(s.help or s.kind) + extra)
    fx = top.add_parser("fixtures", help="write demo inputs and a config file")
    fx.add_argument("directory")
    rp = top.add_parser("replay", help="rerun a manifest and compare output digests")
    rp.add_argument("manifest")
    rp.add_argument("--out", default=None)
    return p


def _common(sp):
    sp.add_argument("--config", default=None, help="INI file with a section per subcommand")
    sp.add_argument("--out", default=None, help=f"output directory (else ${OUT_ENV}, else ./{DEFAULT_OUT})")
    sp.add_argument("--seed", type=int, default=None, help="seed for stochastic steps")
    sp.add_argument("--threads", type=int, default=1, help="maximum worker threads")


def out_dir(arg) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def execute(cfg: RunConfig, out: Path) -> dict:
    run = Run(cfg, out)
    COMMANDS[cfg.command].handler(run)
    return finish(run)


def replay(manifest_path, out) -> int:
    m = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cmd = COMMANDS.get(m.get("command"))
    if cmd is None:
        raise InvalidParams(f"manifest names unknown command {m.get('command')!r}")
    now = io.file_digests(sorted({p for p in _manifest_inputs(m)}))
    changed = sorted(k for k, v in m["inputs"].items() if now.get(k) != v)
    if changed:
        raise DataError(f"inputs changed since the manifest was written: {', '.join(changed)}")
    overrides = {k: v for k, v in m["settings"].items() if v is not None}
    for k, v in list(overrides.items()):
        if isinstance(v, list):
            overrides[k] = ",".join(map(str, v))
        elif not isinstance(v, str):
            overrides[k] = str(v)
    cfg = build_config(cmd, None, overrides, m["seed"], m["threads"])
    if cfg.digest() != m["config_hash"]:
        raise InvalidParams("manifest settings do not reproduce its config hash")
    new = execute(cfg, out)
    diff = sorted(n for n in set(m["outputs"]) | set(new["outputs"]) if m["outputs"].get(n) != new["outputs"].get(n))
    if diff:
        print(f"outputs differ: {', '.join(diff)}", file=sys.stderr)
        return 1
    print(f"replayed {cmd.name}: {len(new['outputs'])} outputs identical")
    return 0


def _manifest_inputs(m) -> list:
    # hashed files may live inside input directories; digest the settings paths again
    cmd = COMMANDS[m["command"]]
    return [m["settings"][s.name] for s in cmd.settings if s.kind == "path" and m["settings"].get(s.name)]


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    try:
        if args.group == "fixtures":
            from .fixtures import write_fixtures

            d = write_fixtures(args.directory)
            print(f"fixtures written to {d}; try: agrimon cap greening --config {d / 'agrimon.ini'}")
            return 0
        if args.group == "replay":
            return replay(args.manifest, out_dir(args.out))
        cmd = COMMANDS[args.command]
        overrides = {s.name: getattr(args, f"set_{s.name}") for s in cmd.settings}
        cfg = build_config(cmd, args.config, overrides, args.seed, args.threads)
        out = out_dir(args.out)
        execute(cfg, out)
        print((out / "report.txt").read_text(encoding="utf-8"), end="")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AgrimonError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
