"""Command-line pipeline orchestration.

Subcommands: ingest, fit, simulate, knox, kfun, classify, predict.
Configuration precedence is flags > config file > defaults; the effective
configuration is echoed to ``manifest.txt`` in every output directory.
Logging goes to stderr; data only to files or stdout.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import sys
from pathlib import Path

import numpy as np

from . import background as bg_mod
from . import catalog as cat_mod
from . import hawkes as hk
from . import inference as inf
from . import stattests as st
from .simulate import SimConfig as _SimConfig
from .simulate import simulate as _run_simulate
from .simulate import simulate_ogata as _run_simulate_ogata
from .errors import CatalogError, NumericalError, SimulationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage to 1
        raise UsageError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _read_config_file(path: Path) -> dict:
    """Flat key/value grammar: one ``key = value`` per line, ``#`` comments."""
    if not path.exists():
        raise CatalogError(f"no such config file: {path}")
    out = {}
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _effective(args, file_cfg: dict, defaults: dict, casts: dict) -> dict:
    """Merge flag/file/default values; flags win, then file, then default."""
    eff = {}
    known = set(defaults)
    for key in file_cfg:
        if key not in known:
            raise UsageError(f"unknown config key: {key}")
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            eff[key] = flag_val
        elif key in file_cfg:
            cast = casts.get(key, str)
            raw = file_cfg[key]
            eff[key] = None if raw.lower() == "none" else cast(raw)
        else:
            eff[key] = default
    return eff


def _write_manifest(outdir: Path, subcommand: str, eff: dict) -> None:
    lines = [f"subcommand = {subcommand}"]
    for key in sorted(eff):
        lines.append(f"{key} = {eff[key]}")
    (outdir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _parse_region(text: str) -> cat_mod.Region:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise UsageError("region must be xmin,xmax,ymin,ymax")
    return cat_mod.Region(*parts)


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _load(eff) -> cat_mod.EventCatalog:
    cfg = cat_mod.IngestConfig(
        window_days=eff.get("window_days"),
        region=_parse_region(eff["region"]) if eff.get("region") else None,
        pad_km=eff.get("pad_km", 0.5),
        anchor=_parse_date(eff["anchor"]) if eff.get("anchor") else None,
        out_of_window=eff.get("out_of_window", "fail"),
    )
    return cat_mod.load_catalog(eff["input"], eff.get("format", "csv-planar"), cfg)


def _params_from(eff) -> hk.HawkesParams:
    return hk.HawkesParams(m0=eff["m0"], theta=eff["theta"],
                           omega=eff["omega"], sigma=eff["sigma"])


def _fit_bg(catalog, eff) -> bg_mod.BackgroundModel:
    return bg_mod.fit_background(catalog,
                                 spatial_bandwidth=eff["spatial_bandwidth"],
                                 temporal_bandwidth=eff["temporal_bandwidth"])


def _write_summary(path_csv: Path, path_txt: Path, summary: dict,
                   diags: inf.ChainDiagnostics | None,
                   label: str = "") -> None:
    with open(path_csv, "w") as fh:
        fh.write("parameter,mean,median,lo95,hi95,rhat,ess\n")
        for name in inf.PARAM_NAMES:
            s = summary[name]
            rh = diags.rhat.get(name, float("nan")) if diags else float("nan")
            es = diags.ess.get(name, float("nan")) if diags else float("nan")
            fh.write(f"{name},{s.mean!r},{s.median!r},{s.lo95!r},{s.hi95!r},"
                     f"{rh!r},{es!r}\n")
    rows = [f"{'parameter':>9} {'mean':>12} {'median':>12} {'2.5%':>12} "
            f"{'97.5%':>12}"]
    for name in inf.PARAM_NAMES:
        s = summary[name]
        rows.append(f"{name:>9} {s.mean:>12.6g} {s.median:>12.6g} "
                    f"{s.lo95:>12.6g} {s.hi95:>12.6g}")
    text = ("" if not label else label + "\n") + "\n".join(rows) + "\n"
    path_txt.write_text(text)


# -- subcommands --------------------------------------------------------------

_INGEST_DEFAULTS = dict(
    input=None, format="csv-planar", window_days=None, region=None,
    pad_km=0.5, anchor=None, out_of_window="fail",
    dedup=True, t_merge_min=1.0, s_merge_m=100.0,
    holiday_filter=True, seed=0,
)
_INGEST_CASTS = dict(window_days=float, pad_km=float, t_merge_min=float,
                     s_merge_m=float, dedup=_bool, holiday_filter=_bool,
                     seed=int)


def _cmd_ingest(args) -> int:
    eff = _effective(args, args._file_cfg, _INGEST_DEFAULTS, _INGEST_CASTS)
    if not eff["input"]:
        raise UsageError("ingest requires --input")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = _load(eff)
    _log(f"loaded {len(catalog)} events from {eff['input']}")
    reports = []
    if eff["dedup"]:
        catalog, rep = cat_mod.merge_duplicates(
            catalog, t_merge_min=eff["t_merge_min"], s_merge_m=eff["s_merge_m"])
        reports.append(rep)
        _log(f"dedup removed {rep.removed_count}")
    if eff["holiday_filter"]:
        catalog, rep = cat_mod.remove_holidays(catalog)
        reports.append(rep)
        _log(f"holiday filter removed {rep.removed_count}")
    cat_mod.save_catalog(catalog, outdir / "catalog.csv")
    with open(outdir / "filter_report.csv", "w") as fh:
        fh.write("rule,input_count,removed_count,removed_fraction\n")
        for rep in reports:
            fh.write(f"\"{rep.rule}\",{rep.input_count},{rep.removed_count},"
                     f"{rep.removed_fraction!r}\n")
    _write_manifest(outdir, "ingest", eff)
    print(f"wrote {outdir / 'catalog.csv'} ({len(catalog)} events)")
    return EXIT_OK


_FIT_DEFAULTS = dict(
    input=None, format="csv-planar", window_days=None, region=None,
    pad_km=0.5, anchor=None, out_of_window="fail",
    spatial_bandwidth=bg_mod.DEFAULT_SPATIAL_BANDWIDTH_KM,
    temporal_bandwidth=bg_mod.DEFAULT_TEMPORAL_BANDWIDTH_DAYS,
    chains=4, iterations=200, warmup=100, leapfrog=16, target_accept=0.8,
    algorithm="hmc", n_jobs=1, seed=0, bandwidth_sweep=False,
)
_FIT_CASTS = dict(window_days=float, pad_km=float, spatial_bandwidth=float,
                  temporal_bandwidth=float, chains=int, iterations=int,
                  warmup=int, leapfrog=int, target_accept=float, n_jobs=int,
                  seed=int, bandwidth_sweep=_bool)


def _fit_once(catalog, eff, hs, ht):
    bg = bg_mod.fit_background(catalog, spatial_bandwidth=hs,
                               temporal_bandwidth=ht)
    config = inf.SamplerConfig(chains=eff["chains"], iterations=eff["iterations"],
                               warmup=eff["warmup"], seed=eff["seed"],
                               leapfrog_steps=eff["leapfrog"],
                               target_accept=eff["target_accept"],
                               algorithm=eff["algorithm"], n_jobs=eff["n_jobs"])
    samples, diags = inf.sample_posterior(catalog, bg, inf.PriorSpec(), config)
    return bg, samples, diags


def _cmd_fit(args) -> int:
    eff = _effective(args, args._file_cfg, _FIT_DEFAULTS, _FIT_CASTS)
    if not eff["input"]:
        raise UsageError("fit requires --input")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = _load(eff)
    _log(f"loaded {len(catalog)} events; fitting")

    if eff["bandwidth_sweep"]:
        with open(outdir / "sweep_summary.csv", "w") as fh:
            fh.write("spatial_bandwidth_km,temporal_bandwidth_days,"
                     "m0,theta,omega,sigma\n")
            for hs in bg_mod.BANDWIDTH_SWEEP_KM:
                for ht in bg_mod.BANDWIDTH_SWEEP_DAYS:
                    _log(f"sweep: bandwidths {hs} km / {ht} d")
                    _, samples, _ = _fit_once(catalog, eff, hs, ht)
                    s = inf.summarize(samples)
                    fh.write(f"{hs!r},{ht!r},{s['m0'].mean!r},{s['theta'].mean!r},"
                             f"{s['omega'].mean!r},{s['sigma'].mean!r}\n")
        _write_manifest(outdir, "fit", eff)
        print(f"wrote {outdir / 'sweep_summary.csv'}")
        return EXIT_OK

    bg, samples, diags = _fit_once(catalog, eff, eff["spatial_bandwidth"],
                                   eff["temporal_bandwidth"])
    summary = inf.summarize(samples)
    _write_summary(outdir / "summary.csv", outdir / "summary.txt", summary, diags)
    inf.export_traceplots(samples, outdir / "traceplots.csv")
    post_mean = hk.HawkesParams(summary["m0"].mean, summary["theta"].mean,
                                summary["omega"].mean, summary["sigma"].mean)
    hk.export_decomposition_csv(catalog, post_mean, bg,
                                outdir / "decomposition.csv")
    _write_manifest(outdir, "fit", eff)
    print((outdir / "summary.txt").read_text(), end="")
    return EXIT_OK


_SIM_DEFAULTS = dict(
    m0=1.0, theta=0.0, omega=1.0, sigma=0.1, region="0,10,0,10",
    window_days=30.0, background_rate=1.0, background_catalog=None,
    spatial_bandwidth=bg_mod.DEFAULT_SPATIAL_BANDWIDTH_KM,
    temporal_bandwidth=bg_mod.DEFAULT_TEMPORAL_BANDWIDTH_DAYS,
    snap_m=None, snap_s=None, anchor=None, seed=0, generator="branching",
)
_SIM_CASTS = dict(m0=float, theta=float, omega=float, sigma=float,
                  window_days=float, background_rate=float, snap_m=float,
                  snap_s=float, seed=int, spatial_bandwidth=float,
                  temporal_bandwidth=float)


def _cmd_simulate(args) -> int:
    eff = _effective(args, args._file_cfg, _SIM_DEFAULTS, _SIM_CASTS)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    region = _parse_region(eff["region"])
    params = _params_from(eff)
    if eff["background_catalog"]:
        pilot = cat_mod.load_catalog(eff["background_catalog"])
        background = bg_mod.fit_background(
            pilot, spatial_bandwidth=eff["spatial_bandwidth"],
            temporal_bandwidth=eff["temporal_bandwidth"])
    else:
        background = eff["background_rate"]
    snap = None
    if eff["snap_m"] is not None and eff["snap_s"] is not None:
        snap = (eff["snap_m"], eff["snap_s"])
    config = _SimConfig(
        params=params, region=region, T=eff["window_days"],
        background=background, seed=eff["seed"], grid_snap=snap,
        anchor=_parse_date(eff["anchor"]) if eff.get("anchor") else None)
    labeled = (_run_simulate(config) if eff["generator"] == "branching"
               else None)
    if labeled is None:
        catalog = _run_simulate_ogata(config)
        cat_mod.save_catalog(catalog, outdir / "catalog.csv")
        n = len(catalog)
    else:
        cat_mod.save_catalog(labeled.catalog, outdir / "catalog.csv")
        labeled.export_parentage_csv(outdir / "parentage.csv")
        n = len(labeled.catalog)
    _write_manifest(outdir, "simulate", eff)
    print(f"wrote {outdir / 'catalog.csv'} ({n} events)")
    return EXIT_OK


_KNOX_DEFAULTS = dict(
    input=None, format="csv-planar", window_days=None, region=None,
    pad_km=0.5, anchor=None, out_of_window="fail",
    s_cut_m=134.0, t_cut_min=11.0, n_perm=999, seed=0,
)
_KNOX_CASTS = dict(window_days=float, pad_km=float, s_cut_m=float,
                   t_cut_min=float, n_perm=int, seed=int)


def _cmd_knox(args) -> int:
    eff = _effective(args, args._file_cfg, _KNOX_DEFAULTS, _KNOX_CASTS)
    if not eff["input"]:
        raise UsageError("knox requires --input")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = _load(eff)
    result = st.knox_test(catalog, s_cut_km=eff["s_cut_m"] / 1000.0,
                          t_cut_days=eff["t_cut_min"] / (24.0 * 60.0),
                          n_perm=eff["n_perm"], seed=eff["seed"])
    result.export_csv(outdir / "knox.csv")
    _write_manifest(outdir, "knox", eff)
    c = result.contingency
    print(f"knox test: {eff['s_cut_m']} m, {eff['t_cut_min']} min, "
          f"{eff['n_perm']} permutations")
    print(f"                time<cut   time>=cut")
    print(f"  space<cut  {c[0,0]:>10} {c[0,1]:>11}")
    print(f"  space>=cut {c[1,0]:>10} {c[1,1]:>11}")
    print(f"  p-value = {result.p_value!r}")
    return EXIT_OK


_KFUN_DEFAULTS = dict(
    input=None, format="csv-planar", window_days=None, region=None,
    pad_km=0.5, anchor=None, out_of_window="fail",
    s_grid="0.063,0.126,0.252,0.5,1.0,2.0",
    t_grid="0.00347,0.00694,0.0139,0.0417,0.125,1.0",
    envelope=39, seed=0,
)
_KFUN_CASTS = dict(window_days=float, pad_km=float, envelope=int, seed=int)


def _cmd_kfun(args) -> int:
    eff = _effective(args, args._file_cfg, _KFUN_DEFAULTS, _KFUN_CASTS)
    if not eff["input"]:
        raise UsageError("kfun requires --input")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = _load(eff)
    result = st.st_kfunction(catalog, _parse_float_list(eff["s_grid"]),
                             _parse_float_list(eff["t_grid"]),
                             envelope=eff["envelope"], seed=eff["seed"])
    result.export_csv(outdir / "kfun.csv")
    _write_manifest(outdir, "kfun", eff)
    print(f"wrote {outdir / 'kfun.csv'}")
    return EXIT_OK


_CLASSIFY_DEFAULTS = dict(
    input=None, format="csv-planar", window_days=None, region=None,
    pad_km=0.5, anchor=None, out_of_window="fail",
    m0=None, theta=None, omega=None, sigma=None,
    spatial_bandwidth=bg_mod.DEFAULT_SPATIAL_BANDWIDTH_KM,
    temporal_bandwidth=bg_mod.DEFAULT_TEMPORAL_BANDWIDTH_DAYS, seed=0,
)
_CLASSIFY_CASTS = dict(window_days=float, pad_km=float, m0=float, theta=float,
                       omega=float, sigma=float, spatial_bandwidth=float,
                       temporal_bandwidth=float, seed=int)


def _cmd_classify(args) -> int:
    eff = _effective(args, args._file_cfg, _CLASSIFY_DEFAULTS, _CLASSIFY_CASTS)
    if not eff["input"]:
        raise UsageError("classify requires --input")
    for key in ("m0", "theta", "omega", "sigma"):
        if eff[key] is None:
            raise UsageError(f"classify requires --{key}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = _load(eff)
    bg = _fit_bg(catalog, eff)
    params = _params_from(eff)
    hk.export_decomposition_csv(catalog, params, bg,
                                outdir / "decomposition.csv")
    labels = hk.classify_triggered(catalog, params, bg)
    _write_manifest(outdir, "classify", eff)
    n_trig = int(np.count_nonzero(labels == "triggered"))
    print(f"labeled {n_trig} of {len(catalog)} events triggered")
    return EXIT_OK


_PREDICT_DEFAULTS = dict(
    input=None, format="csv-planar", window_days=None, region=None,
    pad_km=0.5, anchor=None, out_of_window="fail",
    m0=None, theta=None, omega=None, sigma=None,
    spatial_bandwidth=bg_mod.DEFAULT_SPATIAL_BANDWIDTH_KM,
    temporal_bandwidth=bg_mod.DEFAULT_TEMPORAL_BANDWIDTH_DAYS,
    cell_km=1.0, cell_hours=1.0, subgrid=4, seed=0,
)
_PREDICT_CASTS = dict(window_days=float, pad_km=float, m0=float, theta=float,
                      omega=float, sigma=float, spatial_bandwidth=float,
                      temporal_bandwidth=float, cell_km=float,
                      cell_hours=float, subgrid=int, seed=int)


def _cmd_predict(args) -> int:
    eff = _effective(args, args._file_cfg, _PREDICT_DEFAULTS, _PREDICT_CASTS)
    if not eff["input"]:
        raise UsageError("predict requires --input")
    for key in ("m0", "theta", "omega", "sigma"):
        if eff[key] is None:
            raise UsageError(f"predict requires --{key}")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    catalog = _load(eff)
    bg = _fit_bg(catalog, eff)
    result = hk.predict_grid(catalog, _params_from(eff), bg,
                             cell_km=eff["cell_km"],
                             cell_hours=eff["cell_hours"],
                             subgrid=eff["subgrid"])
    result.to_csv(outdir / "prediction.csv")
    _write_manifest(outdir, "predict", eff)
    print(f"correlation = {result.correlation!r}")
    return EXIT_OK


# -- driver -------------------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--config", default=None, help="flat key=value config file")
    sp.add_argument("--out", default="run", help="output directory")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--input", default=None)
    sp.add_argument("--format", default=None,
                    choices=("csv-planar", "csv-latlon"))
    sp.add_argument("--window-days", dest="window_days", type=float)
    sp.add_argument("--region", default=None, help="xmin,xmax,ymin,ymax (km)")
    sp.add_argument("--pad-km", dest="pad_km", type=float)
    sp.add_argument("--anchor", default=None, help="civil date of t=0 (ISO)")
    sp.add_argument("--out-of-window", dest="out_of_window",
                    choices=("fail", "skip"))


def build_parser() -> _Parser:
    parser = _Parser(prog="sthawkes",
                     description="Spatiotemporal self-exciting point process toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="load, project, dedup, and filter a catalog")
    _add_common(p)
    p.add_argument("--t-merge-min", dest="t_merge_min", type=float)
    p.add_argument("--s-merge-m", dest="s_merge_m", type=float)
    p.add_argument("--no-dedup", dest="dedup", action="store_false", default=None)
    p.add_argument("--no-holiday-filter", dest="holiday_filter",
                   action="store_false", default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("fit", help="background KDE + posterior sampling")
    _add_common(p)
    p.add_argument("--spatial-bandwidth", dest="spatial_bandwidth", type=float)
    p.add_argument("--temporal-bandwidth", dest="temporal_bandwidth", type=float)
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--leapfrog", type=int)
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--algorithm", choices=("hmc", "rwm"))
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("--bandwidth-sweep", dest="bandwidth_sweep",
                   action="store_true", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="generate a synthetic labeled catalog")
    _add_common(p)
    for name in ("m0", "theta", "omega", "sigma", "background-rate",
                 "snap-m", "snap-s", "spatial-bandwidth", "temporal-bandwidth"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)
    p.add_argument("--background-catalog", dest="background_catalog")
    p.add_argument("--generator", choices=("branching", "ogata"))
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("knox", help="Knox space-time interaction test")
    _add_common(p)
    p.add_argument("--s-cut-m", dest="s_cut_m", type=float)
    p.add_argument("--t-cut-min", dest="t_cut_min", type=float)
    p.add_argument("--n-perm", dest="n_perm", type=int)
    p.set_defaults(func=_cmd_knox)

    p = sub.add_parser("kfun", help="space-time K-function ratio")
    _add_common(p)
    p.add_argument("--s-grid", dest="s_grid", help="comma list of km")
    p.add_argument("--t-grid", dest="t_grid", help="comma list of days")
    p.add_argument("--envelope", type=int)
    p.set_defaults(func=_cmd_kfun)

    p = sub.add_parser("classify", help="label events background/triggered")
    _add_common(p)
    for name in ("m0", "theta", "omega", "sigma", "spatial-bandwidth",
                 "temporal-bandwidth"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("predict", help="one-step-ahead grid prediction")
    _add_common(p)
    for name in ("m0", "theta", "omega", "sigma", "spatial-bandwidth",
                 "temporal-bandwidth", "cell-km", "cell-hours"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)
    p.add_argument("--subgrid", type=int)
    p.set_defaults(func=_cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args._file_cfg = (_read_config_file(Path(args.config))
                          if args.config else {})
        return args.func(args)
    except UsageError as exc:
        _log(f"ERROR {EXIT_USAGE}: {exc}")
        return EXIT_USAGE
    except (CatalogError, FileNotFoundError) as exc:
        _log(f"ERROR {EXIT_DATA}: {exc}")
        return EXIT_DATA
    except (NumericalError, SimulationError) as exc:
        _log(f"ERROR {EXIT_NUMERICAL}: {exc}")
        return EXIT_NUMERICAL


def entrypoint() -> None:
    sys.exit(main())
