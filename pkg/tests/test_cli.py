import datetime as dt

import numpy as np
import pytest

from sthawkes.catalog import EventCatalog, Region, save_catalog
from sthawkes.cli import main
from sthawkes.hawkes import HawkesParams
from sthawkes.simulate import SimConfig, simulate

REG = Region(0.0, 6.0, 0.0, 6.0)


def _write_fixture_catalog(tmp_path, with_dups=True, with_holidays=True,
                           n=40, seed=0):
    rng = np.random.default_rng(seed)
    anchor = dt.date(2020, 1, 1)
    x = list(rng.uniform(0.5, 5.5, n))
    y = list(rng.uniform(0.5, 5.5, n))
    july4 = (dt.date(2020, 7, 4) - anchor).days
    t = list(np.sort(rng.uniform(0, 170, n)))
    holidays = 0
    if with_holidays:
        for k in range(5):
            x.append(1.0 + 0.2 * k)
            y.append(1.0)
            t.append(july4 + 0.1 + 0.1 * k)
        holidays = 5
    dups = 0
    if with_dups:
        base = sorted(rng.choice(n, 10, replace=False))
        for k in base:
            x.append(x[k] + 0.01)
            y.append(y[k])
            t.append(t[k] + 20 / 86400)
        dups = 10
    cat = EventCatalog(x, y, t, REG, T=366.0, anchor=anchor, provenance="fixture")
    path = tmp_path / "raw.csv"
    save_catalog(cat, path)
    return path, n, dups, holidays


def test_ingest_reports_filters(tmp_path, capsys):
    import csv
    path, n, dups, holidays = _write_fixture_catalog(tmp_path)
    out = tmp_path / "run"
    rc = main(["ingest", "--input", str(path), "--out", str(out)])
    assert rc == 0
    with open(out / "filter_report.csv") as fh:
        report = list(csv.reader(fh))
    assert len(report) == 3
    assert int(report[1][2]) == dups
    assert int(report[2][2]) == holidays
    assert (out / "catalog.csv").exists()
    assert (out / "manifest.txt").exists()


def test_ingest_no_holiday_filter_flag(tmp_path):
    path, n, dups, holidays = _write_fixture_catalog(tmp_path)
    out = tmp_path / "run"
    rc = main(["ingest", "--input", str(path), "--out", str(out),
               "--no-holiday-filter"])
    assert rc == 0
    report = (out / "filter_report.csv").read_text()
    assert "remove-holidays" not in report
    lines = (out / "catalog.csv").read_text().splitlines()
    assert len(lines) - 1 == n + holidays  # dups removed, holidays kept


def test_ingest_missing_input_exit_code(tmp_path, capsys):
    rc = main(["ingest", "--input", str(tmp_path / "nope.csv"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "ERROR 2" in err and "nope.csv" in err


def test_usage_error_exit_code(tmp_path, capsys):
    rc = main(["ingest", "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "ERROR 1" in capsys.readouterr().err


def test_unknown_subcommand_exit_code():
    assert main(["frobnicate"]) == 1


def test_simulate_theta_zero_empty_parentage(tmp_path):
    out = tmp_path / "sim"
    rc = main(["simulate", "--out", str(out), "--theta", "0", "--m0", "1.0",
               "--omega", "24", "--sigma", "0.1", "--region", "0,5,0,5",
               "--window-days", "10", "--background-rate", "2.0",
               "--seed", "3"])
    assert rc == 0
    parentage = (out / "parentage.csv").read_text().splitlines()
    assert parentage == ["event,parent,generation"]
    assert (out / "catalog.csv").exists()


def test_simulate_then_knox_prints_table(tmp_path, capsys):
    sim_out = tmp_path / "sim"
    rc = main(["simulate", "--out", str(sim_out), "--theta", "0.5",
               "--m0", "1.0", "--omega", "144", "--sigma", "0.126",
               "--region", "0,5,0,5", "--window-days", "20",
               "--background-rate", "2.0", "--seed", "4"])
    assert rc == 0
    capsys.readouterr()
    knox_out = tmp_path / "knox"
    rc = main(["knox", "--input", str(sim_out / "catalog.csv"),
               "--out", str(knox_out), "--n-perm", "199", "--seed", "1"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "p-value" in printed
    assert (knox_out / "knox.csv").exists()


def test_fit_summary_format_and_determinism(tmp_path):
    cfg = SimConfig(params=HawkesParams(1.0, 0.3, 24.0, 0.15), region=REG,
                    T=20.0, background=1.2, seed=5)
    cat = simulate(cfg).catalog
    path = tmp_path / "cat.csv"
    save_catalog(cat, path)
    args = ["fit", "--input", str(path), "--chains", "2", "--iterations",
            "60", "--warmup", "30", "--seed", "11",
            "--spatial-bandwidth", "2.0", "--temporal-bandwidth", "7.0"]
    out1, out2 = tmp_path / "f1", tmp_path / "f2"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for name in ("summary.csv", "traceplots.csv", "decomposition.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    header = (out1 / "summary.csv").read_text().splitlines()[0]
    assert header == "parameter,mean,median,lo95,hi95,rhat,ess"
    text = (out1 / "summary.txt").read_text()
    for param in ("m0", "theta", "omega", "sigma"):
        assert param in text


def test_config_file_and_flag_precedence(tmp_path, capsys):
    path, *_ = _write_fixture_catalog(tmp_path, with_dups=True,
                                      with_holidays=False)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("t-merge-min = 2.0\ns-merge-m = 50\n")
    out = tmp_path / "o1"
    rc = main(["ingest", "--input", str(path), "--config", str(cfg),
               "--out", str(out)])
    assert rc == 0
    manifest = (out / "manifest.txt").read_text()
    assert "t_merge_min = 2.0" in manifest
    assert "s_merge_m = 50.0" in manifest
    # flags override the file
    out2 = tmp_path / "o2"
    rc = main(["ingest", "--input", str(path), "--config", str(cfg),
               "--out", str(out2), "--s-merge-m", "250"])
    assert rc == 0
    assert "s_merge_m = 250.0" in (out2 / "manifest.txt").read_text()


def test_config_file_unknown_key(tmp_path, capsys):
    path, *_ = _write_fixture_catalog(tmp_path)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("bogus-knob = 7\n")
    rc = main(["ingest", "--input", str(path), "--config", str(cfg),
               "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "unknown config key" in capsys.readouterr().err


def test_classify_and_predict_outputs(tmp_path, capsys):
    cfg = SimConfig(params=HawkesParams(1.0, 0.3, 48.0, 0.15), region=REG,
                    T=15.0, background=1.5, seed=6)
    cat = simulate(cfg).catalog
    path = tmp_path / "cat.csv"
    save_catalog(cat, path)
    common = ["--input", str(path), "--m0", "0.7", "--theta", "0.3",
              "--omega", "48", "--sigma", "0.15",
              "--spatial-bandwidth", "2.0", "--temporal-bandwidth", "7.0"]
    out = tmp_path / "cl"
    assert main(["classify", *common, "--out", str(out)]) == 0
    lines = (out / "decomposition.csv").read_text().splitlines()
    assert lines[0] == "x_km,y_km,t_days,endemic,excitatory,ratio_r,label"
    assert len(lines) - 1 == len(cat)
    capsys.readouterr()
    out_p = tmp_path / "pr"
    assert main(["predict", *common, "--out", str(out_p),
                 "--cell-km", "2.0", "--cell-hours", "24.0"]) == 0
    printed = capsys.readouterr().out
    assert "correlation" in printed
    pred = (out_p / "prediction.csv").read_text().splitlines()
    assert pred[0] == "cell_x_km,cell_y_km,hour,expected,observed"


def test_kfun_csv_output(tmp_path):
    cfg = SimConfig(params=HawkesParams(1.0, 0.4, 144.0, 0.126), region=REG,
                    T=20.0, background=2.0, seed=7)
    cat = simulate(cfg).catalog
    path = tmp_path / "cat.csv"
    save_catalog(cat, path)
    out = tmp_path / "kf"
    rc = main(["kfun", "--input", str(path), "--out", str(out),
               "--s-grid", "0.126,0.5", "--t-grid", "0.007,0.1",
               "--envelope", "9", "--seed", "2"])
    assert rc == 0
    lines = (out / "kfun.csv").read_text().splitlines()
    assert len(lines) == 1 + 4


def test_manifest_echoes_seed(tmp_path):
    out = tmp_path / "sim"
    main(["simulate", "--out", str(out), "--theta", "0", "--m0", "1.0",
          "--omega", "24", "--sigma", "0.1", "--region", "0,4,0,4",
          "--window-days", "5", "--background-rate", "1.0", "--seed", "42"])
    manifest = (out / "manifest.txt").read_text()
    assert "seed = 42" in manifest
    assert "subcommand = simulate" in manifest
