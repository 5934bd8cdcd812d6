import json

import numpy as np
import pandas as pd
import pytest

from agrimon import io
from agrimon.cli import COMMANDS, build_config, main
from agrimon.errors import InvalidParams
from agrimon.minicube import rasterize_parcels, zonal_stats


@pytest.fixture(scope="module")
def fx(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixtures")
    assert main(["fixtures", str(d)]) == 0
    return d


def run(fx, out, *args):
    return main([*args, "--config", str(fx / "agrimon.ini"), "--out", str(out)])


SEEDED = {"pheno estimate", "pheno continuous", "rice map"}


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_every_command_runs(fx, tmp_path, command):
    extra = ["--seed", "3"] if command in SEEDED else []
    assert run(fx, tmp_path, *command.split(), *extra) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["command"] == command and len(m["config_hash"]) == 64
    assert m["inputs"] and all(len(v) == 64 for v in m["inputs"].values())
    for name, digest in m["outputs"].items():
        assert io.sha256_file(tmp_path / name) == digest
    assert "machine outputs:" in (tmp_path / "report.txt").read_text()


def test_pheno_estimate_metaclass_column(fx, tmp_path):
    assert run(fx, tmp_path, "pheno", "estimate", "--seed", "1") == 0
    df = pd.read_csv(tmp_path / "predictions.csv")
    assert df["metaclass"].between(1, 16).all()
    assert {"w_RE", "w_BO", "primary", "secondary"} <= set(df.columns)
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["eval"]["maxdiff-1"] >= 0.85


def test_phenology_eval_reads_predictions(fx, tmp_path):
    assert run(fx, tmp_path / "est", "pheno", "estimate", "--seed", "1") == 0
    args = ["eval", "--kind", "phenology", "--predictions", str(tmp_path / "est" / "predictions.csv"),
            "--observations", str(fx / "cotton_obs.csv"), "--out", str(tmp_path / "ev")]
    assert main(args) == 0
    ev = json.loads((tmp_path / "ev" / "eval.json").read_text())
    est = json.loads((tmp_path / "est" / "summary.json").read_text())["eval"]
    assert ev["maxdiff-1"] == est["maxdiff-1"]
    assert ev["kappa"] == pytest.approx(est["kappa"], abs=1e-12)


def test_greening_flags_bob(fx, tmp_path):
    assert run(fx, tmp_path, "cap", "greening") == 0
    df = pd.read_csv(tmp_path / "greening.csv").set_index("farmer_id")
    assert df.loc["bob", "status"] == "breach"
    assert df.loc["ana", "status"] == "compliant"
    gj = json.loads((tmp_path / "greening.geojson").read_text())
    assert {f["properties"]["verdict"] for f in gj["features"] if f["properties"]["farmer_id"] == "bob"} == {"breach"}


def test_smr1_lucy_high(fx, tmp_path):
    assert run(fx, tmp_path, "cap", "smr1") == 0
    df = pd.read_csv(tmp_path / "smr1.csv").set_index("parcel_id")
    assert df.loc[1, "risk"] == "high" and df.loc[2, "risk"] == "low"
    assert df.loc[1, "bearing_deg"] == pytest.approx(267.0)


def test_sample_keeps_seasonal_mismatch(fx, tmp_path):
    assert run(fx, tmp_path, "cap", "sample") == 0
    df = pd.read_csv(tmp_path / "alarms.csv").set_index("parcel")
    assert df.loc["dan-1", "kept"] == 1


def test_bad_threshold_exit_2(fx, tmp_path):
    assert run(fx, tmp_path, "cap", "sample", "--green", "1.5") == 2
    assert run(fx, tmp_path, "pheno", "estimate", "--seed", "1", "--m", "1") == 2
    assert run(fx, tmp_path, "cap", "smr1", "--buffer-m", "ten") == 2


def test_unknown_key_and_section(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[cap greening]\nparcels = x.geojson\nsmall = 5\n")
    assert main(["cap", "greening", "--config", str(ini), "--out", str(tmp_path / "o")]) == 2
    ini.write_text("[cap greenings]\nparcels = x.geojson\n")
    assert main(["cap", "greening", "--config", str(ini), "--out", str(tmp_path / "o")]) == 2


def test_seed_mandatory_when_stochastic(fx, tmp_path):
    assert run(fx, tmp_path, "rice", "map") == 2
    assert run(fx, tmp_path, "pheno", "estimate") == 2
    # continuous matching alone is deterministic
    assert run(fx, tmp_path, "pheno", "continuous", "--train", "false") == 0


def test_data_errors_exit_1(fx, tmp_path):
    assert main(["cap", "greening", "--parcels", str(tmp_path / "none.geojson"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "runs.csv"
    bad.write_text("parcel,run_day,declared\n1,2,maize\n")
    assert main(["cap", "sample", "--runs", str(bad), "--out", str(tmp_path)]) == 1


def test_usage_error_exit_2(tmp_path):
    assert main(["cap", "nonsense"]) == 2


def test_output_dir_env_override(fx, tmp_path, monkeypatch):
    monkeypatch.setenv("AGRIMON_OUT", str(tmp_path / "envout"))
    assert main(["cap", "greening", "--config", str(fx / "agrimon.ini")]) == 0
    assert (tmp_path / "envout" / "greening.csv").is_file()


def test_config_paths_relative_to_file(fx, monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    cfg = build_config(COMMANDS["cap smr1"], fx / "agrimon.ini")
    assert cfg.settings["parcels"] == str((fx / "lucy.geojson").resolve())


def test_flag_overrides_config(fx):
    cfg = build_config(COMMANDS["cap smr1"], fx / "agrimon.ini", {"buffer_m": "2.5"})
    assert cfg.settings["buffer_m"] == 2.5
    with pytest.raises(InvalidParams):
        build_config(COMMANDS["cap smr1"], fx / "agrimon.ini", {"half_window": "0"})


def test_rerun_byte_identical_and_replay(fx, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(fx, a, "rice", "map", "--seed", "11") == 0
    assert run(fx, b, "rice", "map", "--seed", "11", "--threads", "3") == 0
    names = json.loads((a / "manifest.json").read_text())["outputs"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    assert main(["replay", str(a / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    for n in names:
        assert (a / n).read_bytes() == (tmp_path / "c" / n).read_bytes()


def test_replay_detects_changed_input(fx, tmp_path):
    src = tmp_path / "bob.geojson"
    src.write_bytes((fx / "bob.geojson").read_bytes())
    assert main(["cap", "greening", "--parcels", str(src), "--out", str(tmp_path / "a")]) == 0
    src.write_text(src.read_text().replace("12.1058", "2.1058"))
    assert main(["replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 1


def test_zonal_output_reingests_losslessly(fx, tmp_path):
    assert run(fx, tmp_path, "cube", "stats") == 0
    back = io.read_timeseries_table(tmp_path / "zonal.csv").data
    cube = io.read_cube(fx / "cube").data
    parcels = io.read_parcels(fx / "parcels.geojson").data
    ref = zonal_stats(cube, rasterize_parcels(parcels, cube.grid), "mean", parcel_ids=list(parcels))
    ref = ref.rename(columns={"date": "day"}).sort_values(["parcel_id", "day", "variable"]).reset_index(drop=True)
    back = back.sort_values(["parcel_id", "day", "variable"]).reset_index(drop=True)
    np.testing.assert_array_equal(back["value"].to_numpy(), ref["value"].to_numpy())
    assert back["parcel_id"].tolist() == ref["parcel_id"].tolist()


def test_prepared_series_reingest(fx, tmp_path):
    assert run(fx, tmp_path, "sits", "prepare") == 0
    series = io.read_timeseries(tmp_path / "prepared.csv").data
    days = {tuple(ts.days) for per in series.values() for ts in per.values()}
    assert len(days) == 1  # every series on the same anchors
    assert not any(np.isnan(ts.values).any() for per in series.values() for ts in per.values())


def test_indices_match_formulas(fx, tmp_path):
    assert run(fx, tmp_path, "indices") == 0
    bands = io.read_timeseries_table(fx / "bands.csv").data
    wide = bands.set_index(["parcel_id", "day", "variable"])["value"].unstack()
    got = io.read_timeseries_table(tmp_path / "indices.csv").data
    ndvi = got[got.variable == "NDVI"].set_index(["parcel_id", "day"])["value"]
    expect = (wide["B08"] - wide["B04"]) / (wide["B08"] + wide["B04"])
    pd.testing.assert_series_equal(ndvi.sort_index(), expect.sort_index(), check_names=False, rtol=0, atol=1e-15)
    gdd = pd.read_csv(tmp_path / "gdd.csv")
    assert (gdd["agdd"].diff().dropna() >= 0).all()


def test_pheno_metrics_row_per_parcel(fx, tmp_path):
    assert run(fx, tmp_path, "pheno", "metrics") == 0
    df = pd.read_csv(tmp_path / "metrics.csv")
    assert len(df) == 8
    assert (df["sos"] < df["pos"]).all() and (df["pos"] < df["eos"]).all()


def test_rejects_file_written(fx, tmp_path):
    ts = tmp_path / "ts.csv"
    ts.write_text("parcel_id,day,variable,value\n1,100,NDVI,0.1\n1,bad,NDVI,0.2\n1,110,NDVI,0.3\n")
    assert main(["sits", "prepare", "--timeseries", str(ts), "--out", str(tmp_path / "o")]) == 0
    rej = pd.read_csv(tmp_path / "o" / "rejects_timeseries.csv")
    assert rej["row"].tolist() == [2]
