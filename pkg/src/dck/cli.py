"""Command-line entry point: ``dck <subcommand> ...``.

Every file written starts with a ``# dck <version> config=<digest> seed=<seed>``
comment line unless ``--no-provenance`` is given (JSON files carry the same
facts under a ``provenance`` key instead). A failing command removes whatever
it had already written and exits non-zero.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, baseline, config as configmod, pipeline
from .bundle import dumps as bundle_text, load_bundle
from .core import BiSampleSets, ConfigError, DataError, DCKError, UniDataset, as_locations
from .fusion import STUDY_TAUS, FusionConfig, fuse
from .metrics import energy_score, mae, picp_al, pit, variogram_score
from .simgen import CovarianceSpec, ScenarioConfig
from .tables import covariates_of, csv_text, locations_of, read_csv

log = logging.getLogger("dck")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class Outputs:
    """Writes artifacts atomically and remembers them so a failure can remove them."""

    def __init__(self, digest: str, seed: int, enabled: bool = True, force: bool = True):
        self.digest, self.seed, self.enabled, self.force = digest, int(seed), enabled, force
        self.written = []

    @property
    def header(self):
        return configmod.provenance(self.digest, self.seed) if self.enabled else None

    def _write(self, path, text: str) -> Path:
        path = Path(path)
        if path.exists() and not self.force:
            raise DataError(f"{path} exists; pass --force to overwrite")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".partial")
        try:
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, path)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        self.written.append(path)
        return path

    def csv(self, path, columns: dict) -> Path:
        return self._write(path, csv_text(columns, self.header))

    def json(self, path, obj: dict) -> Path:
        if self.enabled:
            obj = dict(obj, provenance={"version": __version__, "config": self.digest, "seed": self.seed})
        return self._write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")

    def text(self, path, text: str) -> Path:
        return self._write(path, text)

    def rollback(self):
        for path in reversed(self.written):
            path.unlink(missing_ok=True)
        self.written.clear()


def _args_digest(args) -> str:
    skip = {"func", "no_provenance", "force", "verbose"}
    d = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _quantile_name(tau: float) -> str:
    return f"q{tau:g}"


# --------------------------------------------------------------------------
# data loading helpers

def _uni_from_csv(path, value_col: str = "z") -> UniDataset:
    t = read_csv(path, required=("x", "y", value_col))
    keep = np.isfinite(t[value_col])
    return UniDataset(locations_of(t)[keep], t[value_col][keep],
                      None if covariates_of(t) is None else covariates_of(t)[keep])


def _bi_from_csv(z1_path, z2_path) -> BiSampleSets:
    return BiSampleSets(_uni_from_csv(z1_path, "z1"), _uni_from_csv(z2_path, "z2"))


def _target_table(path, given: str = None) -> dict:
    required = ("x", "y") + ((given,) if given else ())
    return read_csv(path, required=required)


def _truth_column(table: dict, path) -> np.ndarray:
    for name in ("y1_true", "z1", "z", "truth"):
        if name in table:
            return table[name]
    raise DataError(f"{path}: no truth column (looked for y1_true, z1, z, truth)")


# --------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, out: Outputs):
    cfg = configmod.load(args.config).scenario if args.config else None
    if cfg is None:
        cfg = ScenarioConfig.preset(args.scenario, args.n)
    elif args.n:
        cfg = replace(cfg, n_locations=args.n)
    scn, _ = pipeline.draw_replicate(cfg, args.seed, 0)
    prefix = args.out
    if cfg.bivariate:
        d = scn.data
        out.csv(f"{prefix}_z1.csv", {"x": d.set1.locations[:, 0], "y": d.set1.locations[:, 1],
                                    "z1": d.set1.values})
        out.csv(f"{prefix}_z2.csv", {"x": d.set2.locations[:, 0], "y": d.set2.locations[:, 1],
                                    "z2": d.set2.values})
        out.csv(f"{prefix}_test.csv", {"x": scn.test_locations[:, 0], "y": scn.test_locations[:, 1],
                                      "y1_true": scn.test_truth[:, 0], "y2_true": scn.test_truth[:, 1],
                                      "z2": scn.test_z2})
        print(f"N1={d.n1} N2={d.n2} test={len(scn.test_locations)}")
        return
    cols = {"x": scn.train.locations[:, 0], "y": scn.train.locations[:, 1], "z": scn.train.values}
    test = {"x": scn.test.locations[:, 0], "y": scn.test.locations[:, 1], "y1_true": scn.test_truth}
    if scn.train.covariates is not None:
        for j in range(scn.train.covariates.shape[1]):
            cols[f"x{j + 1}"] = scn.train.covariates[:, j]
            test[f"x{j + 1}"] = scn.test.covariates[:, j]
    out.csv(f"{prefix}_train.csv", cols)
    out.csv(f"{prefix}_test.csv", test)
    print(f"train={len(scn.train)} test={len(scn.test)}")


def _fusion_config(args) -> FusionConfig:
    taus = _floats(args.taus) if args.taus else None
    return FusionConfig(m1=args.m1 if taus is None else len(taus), taus=taus, kappa=args.kappa,
                        kappa2=args.kappa2)


def _write_fused(out: Outputs, directory, fused):
    directory = Path(directory)
    out.csv(directory / "fused.csv", {
        "x": fused.locations[:, 0], "y": fused.locations[:, 1], "z1": fused.z1, "z2": fused.z2,
        "source": np.asarray(fused.source, dtype=object), "line": fused.line + 1})
    out.csv(directory / "lines.csv", {"tau": [ln.tau for ln in fused.lines],
                                      "a": [ln.a for ln in fused.lines], "b": [ln.b for ln in fused.lines]})


def cmd_fuse(args, out: Outputs):
    fused = fuse(_bi_from_csv(args.z1, args.z2), _fusion_config(args))
    _write_fused(out, args.out_dir, fused)
    print(f"fused {len(fused)} points ({int(fused.projected.sum())} projected) on {len(fused.lines)} lines")


def _dck_config(args) -> pipeline.DCKConfig:
    cfg = configmod.load(args.config).dck if args.config else pipeline.DCKConfig()
    changes = {k: getattr(args, k) for k in ("n_classes", "delta", "c") if getattr(args, k) is not None}
    if args.taus or args.m1 is not None:
        m1 = args.m1 if args.m1 is not None else cfg.fusion.m1
        taus = _floats(args.taus) if args.taus else None
        changes["fusion"] = replace(cfg.fusion, m1=len(taus) if taus else m1, taus=taus)
    if args.epochs is not None:
        changes["train"] = replace(cfg.train, max_epochs=args.epochs)
    return replace(cfg, **changes)


def _bundle_meta(bundle, digest: str, seed: int):
    bundle.meta.update(config_digest=digest, seed=int(seed), version=__version__)


def cmd_train(args, out: Outputs):
    cfg = _dck_config(args)
    if args.data:
        fit = pipeline.fit_univariate(_uni_from_csv(args.data, "z"), cfg, args.seed)
    elif args.z1 and args.z2:
        fit = pipeline.fit_bivariate(_bi_from_csv(args.z1, args.z2), cfg, args.seed)
        if args.fused_dir:
            _write_fused(out, args.fused_dir, fit.fusion)
    else:
        raise ConfigError("train needs --data (one variable) or --z1 and --z2 (two variables)")
    _bundle_meta(fit.bundle, out.digest, args.seed)
    out.text(args.out, bundle_text(fit.bundle))
    if args.log:
        out.text(args.log, fit.training.log_csv())
    print(f"trained {fit.bundle.partition.n} classes, h={fit.bundle.bandwidth_h:.6g}, "
          f"best epoch {fit.training.best_epoch}")


def _predictive(args):
    bundle = load_bundle(args.model)
    t = _target_table(args.locations, args.given)
    cov = covariates_of(t) if bundle.n_covariates else None
    given = t[args.given] if args.given else None
    return bundle, t, bundle.predictive(locations_of(t), cov), given


def cmd_predict(args, out: Outputs):
    _, t, pred, given = _predictive(args)
    taus = _floats(args.quantiles)
    cols = {"x": t["x"], "y": t["y"]}
    for tau in taus:
        cols[_quantile_name(tau)] = np.atleast_1d(pred.quantile(tau, given_y2=given))
    out.csv(args.out, cols)


def cmd_exceedance(args, out: Outputs):
    _, t, pred, given = _predictive(args)
    prob = np.atleast_1d(pred.exceedance(args.threshold, given_y2=given))
    out.csv(args.out, {"x": t["x"], "y": t["y"], "prob_exceed": prob})


def cmd_pit(args, out: Outputs):
    _, t, pred, given = _predictive(args)
    obs = t[args.obs] if args.obs else _truth_column(t, args.locations)
    out.csv(args.out, {"u": np.atleast_1d(pit(pred, obs, given_y2=given))})


def _interval_columns(pred: dict, alpha: float, path):
    lo_name, mid_name, hi_name = (_quantile_name(v) for v in (alpha / 2, 0.5, 1 - alpha / 2))
    if all(c in pred for c in (lo_name, mid_name, hi_name)):
        return pred[mid_name], pred[lo_name], pred[hi_name]
    if all(c in pred for c in ("mean", "lo", "hi")):
        return pred["mean"], pred["lo"], pred["hi"]
    raise DataError(f"{path}: need columns {lo_name},{mid_name},{hi_name} or mean,lo,hi")


def cmd_evaluate(args, out: Outputs):
    pred = read_csv(args.pred)
    truth_table = read_csv(args.truth)
    truth = _truth_column(truth_table, args.truth)
    mid, lo, hi = _interval_columns(pred, args.alpha, args.pred)
    if len(truth) != len(mid):
        raise DataError(f"{len(mid)} predictions for {len(truth)} truths")
    if all(c in pred and c in truth_table for c in ("x", "y")):
        if not (np.allclose(pred["x"], truth_table["x"]) and np.allclose(pred["y"], truth_table["y"])):
            raise DataError("prediction and truth rows are at different locations")
    picp, al = picp_al(lo, hi, truth)
    metrics = {"mae": mae(mid, truth), "picp": picp, "al": al}
    if args.out:
        out.json(args.out, metrics)
    print(json.dumps(metrics, sort_keys=True))


def cmd_evaluate_joint(args, out: Outputs):
    s = read_csv(args.samples, required=("site", "y1", "y2"))
    o = read_csv(args.obs)
    names = ("y1_true", "y2_true") if "y1_true" in o else ("y1", "y2")
    if not all(n in o for n in names):
        raise DataError(f"{args.obs}: need columns y1_true,y2_true or y1,y2")
    obs = np.column_stack([o[names[0]], o[names[1]]])
    site = s["site"].astype(np.int64)
    counts = np.bincount(site, minlength=len(obs))
    if len(counts) != len(obs) or np.any(counts != counts[0]) or counts[0] == 0:
        raise DataError("every observation site needs the same positive number of samples")
    order = np.argsort(site, kind="stable")
    samples = np.column_stack([s["y1"], s["y2"]])[order].reshape(len(obs), counts[0], 2)
    metrics = {"es": energy_score(samples, obs), "vs": variogram_score(samples, obs, args.beta)}
    if args.out:
        out.json(args.out, metrics)
    print(json.dumps(metrics, sort_keys=True))


def _spec_from_params(family: str, text: str) -> CovarianceSpec:
    params = {}
    for item in filter(None, (p.strip() for p in (text or "").split(","))):
        key, _, val = item.partition("=")
        try:
            params[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad covariance parameter {item!r}") from exc
    known = {"exponential": ("range", "sigma"), "matern": ("range", "sigma", "nu"),
             "bivariate_matern": ("range1", "range2", "nu1", "nu2", "sigma1", "sigma2", "rho12")}[family]
    extra = sorted(set(params) - set(known))
    if extra:
        raise ConfigError(f"unknown covariance parameter(s) for {family}: {extra}")
    g = params.get
    if family == "exponential":
        return CovarianceSpec.exponential(g("range", 1.0), g("sigma", 1.0))
    if family == "matern":
        return CovarianceSpec.matern(g("nu", 0.5), g("range", 1.0), g("sigma", 1.0))
    return CovarianceSpec.bivariate((g("range1", 0.2), g("range2", 0.4)), (g("nu1", 0.8), g("nu2", 0.8)),
                                    (g("sigma1", 1.0), g("sigma2", 1.0)), g("rho12", 0.0))


def cmd_baseline_krige(args, out: Outputs):
    spec = _spec_from_params(args.family, args.params)
    t = _target_table(args.targets, args.given)
    if spec.p == 2:
        if not (args.z1 and args.z2):
            raise ConfigError("bivariate_matern needs --z1 and --z2")
        model = baseline.fit(_bi_from_csv(args.z1, args.z2), spec, args.estimate,
                             (args.nugget, args.nugget), "constant" if args.trend != "zero" else "zero",
                             seed=args.seed)
        cond = (2, t[args.given]) if args.given else None
        mean, sd = baseline.predict(model, locations_of(t), 1, conditioning=cond)
    else:
        if not args.train:
            raise ConfigError(f"{args.family} needs --train")
        data = _uni_from_csv(args.train, "z")
        trend = args.trend
        if trend == "linear" and data.covariates is None:
            raise ConfigError("linear trend needs covariate columns x1, x2, ...")
        model = baseline.fit(data, spec, args.estimate, args.nugget, trend, seed=args.seed)
        cov = covariates_of(t) if trend == "linear" else None
        mean, sd = baseline.predict(model, locations_of(t), covariates=cov)
    lo, hi = baseline.interval(mean, sd)
    out.csv(args.out, {"x": t["x"], "y": t["y"], "mean": mean, "sd": sd, "lo": lo, "hi": hi})


def cmd_run(args, out: Outputs):
    """Simulate one replicate, fit DCK (and CK), predict the test sites and score them."""
    rc = configmod.load(args.config).with_seed(args.seed)
    out.digest, out.seed = rc.digest(), rc.seed
    directory = Path(args.out_dir)
    stage = "simulate"
    timings = {}
    try:
        t0 = time.perf_counter()
        scn, seed = pipeline.draw_replicate(rc.scenario, rc.seed, 0)
        timings["simulate"] = time.perf_counter() - t0
        metrics = {"scenario": rc.scenario.name}
        if "DCK" in rc.methods:
            stage = "DCK"
            t0 = time.perf_counter()
            if rc.scenario.bivariate:
                m, fit = pipeline.dck_bivariate(scn, rc.dck, seed, rc.joint_samples)
                locs, given, truth = scn.test_locations, scn.test_z2, scn.test_truth[:, 0]
                cov = None
            else:
                m, fit = pipeline.dck_univariate(scn, rc.dck, seed)
                locs, given, truth = scn.test.locations, None, scn.test_truth
                cov = scn.test.covariates
            timings["DCK"] = time.perf_counter() - t0
            stage = "write"
            _bundle_meta(fit.bundle, out.digest, rc.seed)
            out.text(directory / "bundle.json", bundle_text(fit.bundle))
            out.text(directory / "training_log.csv", fit.training.log_csv())
            if fit.fusion is not None:
                _write_fused(out, directory, fit.fusion)
            pred = fit.bundle.predictive(locs, cov)
            a = rc.dck.alpha
            cols = {"x": locs[:, 0], "y": locs[:, 1]}
            for tau in (a / 2, 0.5, 1 - a / 2):
                cols[_quantile_name(tau)] = np.atleast_1d(pred.quantile(tau, given_y2=given))
            cols["y1_true"] = truth
            out.csv(directory / "predictions.csv", cols)
            metrics.update(m)
            metrics["n_classes"] = fit.bundle.partition.n
            metrics["bandwidth_h"] = fit.bundle.bandwidth_h
        if "CK" in rc.methods:
            stage = "CK"
            t0 = time.perf_counter()
            opts = rc.baseline.fit_options
            if rc.scenario.bivariate:
                m, _ = pipeline.ck_bivariate(scn, rc.baseline.mode, seed, rc.joint_samples, **opts)
            else:
                m, _ = pipeline.ck_univariate(scn, rc.baseline.mode, seed, **opts)
            timings["CK"] = time.perf_counter() - t0
            metrics["ck"] = m
        stage = "write"
        out.json(directory / "metrics.json", metrics)
        # wall-clock numbers live apart from the metrics so the latter stay reproducible
        out.json(directory / "timings.json", {k: round(v, 3) for k, v in timings.items()})
    except DCKError as exc:
        raise DCKError(f"stage {stage} failed: {exc}") from exc
    print(json.dumps({k: v for k, v in metrics.items() if k != "scenario"}, sort_keys=True))


def cmd_replicate(args, out: Outputs):
    if args.config:
        configs = [configmod.load(args.config)]
    else:
        names = pipeline.TABLES[args.table]
        if args.scenario:
            if args.scenario not in names:
                raise ConfigError(f"{args.table} has scenarios {names}")
            names = (args.scenario,)
        configs = [configmod.load(TABLE_PRESETS[n]) for n in names]
    directory = Path(args.out_dir)
    for rc in configs:
        rc = rc.with_seed(args.seed)
        changes = {}
        if args.replicates is not None:
            changes["replicates"] = args.replicates
        if args.ck_mode:
            changes["baseline"] = replace(rc.baseline, mode=args.ck_mode)
        rc = replace(rc, **changes)
        out.digest, out.seed = rc.digest(), rc.seed
        table, failures = pipeline.replicate(rc.replicate_config())
        name = rc.scenario.name
        out.text(directory / f"{name}_replicates.csv", _with_header(out, table.replicate_csv()))
        out.text(directory / f"{name}_summary.csv", _with_header(out, table.summary_csv()))
        if failures:
            print(f"warning: {len(failures)} replicate(s) of {name} failed and were excluded", file=sys.stderr)
        print(f"== {name} ({rc.replicates} replicates)")
        print(table.summary_csv(), end="")


def _with_header(out: Outputs, text: str) -> str:
    return text if out.header is None else out.header + "\n" + text


TABLE_PRESETS = {"uni_gauss": "uni_gauss_1600", "uni_tukey": "uni_tukey_1600",
                  "bi_gauss": "bi_gauss_3600", "bi_tukey": "bi_tukey_3600"}


def _duplicates(loc: np.ndarray, path):
    order = np.lexsort((loc[:, 1], loc[:, 0]))
    s = loc[order]
    same = np.flatnonzero(np.all(s[1:] == s[:-1], axis=1))
    if len(same):
        i, j = sorted((int(order[same[0]]) + 1, int(order[same[0] + 1]) + 1))
        raise DataError(f"{path}: duplicate coordinate ({s[same[0], 0]}, {s[same[0], 1]}) "
                        f"in data rows {i} and {j}")


def hull_subsample(z2: UniDataset, z1_locations, target: int, seed) -> UniDataset:
    """Random ``target`` of the Z2 sites inside the convex hull of the Z1 sites."""
    from scipy.spatial import Delaunay
    inside = Delaunay(as_locations(z1_locations)).find_simplex(z2.locations) >= 0
    idx = np.flatnonzero(inside)
    if target < len(idx):
        idx = np.sort(np.random.default_rng(seed).choice(idx, size=target, replace=False))
    return z2.subset(idx)


def ingest(z1_path, z2_path, hull_target: int = None, seed=0):
    """Validated BiSampleSets from two CSV files plus (dropped NaN rows per file)."""
    sets, dropped = [], []
    for path, col in ((z1_path, "z1"), (z2_path, "z2")):
        t = read_csv(path, required=("x", "y", col))
        loc = locations_of(t)
        if not np.all(np.isfinite(loc)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(loc), axis=1))[0]) + 1
            raise DataError(f"{path}: missing coordinate in data row {bad}")
        _duplicates(loc, path)
        keep = np.isfinite(t[col])
        dropped.append(int((~keep).sum()))
        sets.append(UniDataset(loc[keep], t[col][keep]))
    z1, z2 = sets
    if hull_target is not None:
        z2 = hull_subsample(z2, z1.locations, hull_target, seed)
    return BiSampleSets(z1, z2), tuple(dropped)


def cmd_ingest(args, out: Outputs):
    data, dropped = ingest(args.z1, args.z2, args.hull_target, args.seed)
    print(f"N1={data.n1} N2={data.n2} dropped_nan_z1={dropped[0]} dropped_nan_z2={dropped[1]}")
    if args.out_dir:
        d = Path(args.out_dir)
        out.csv(d / "z1.csv", {"x": data.set1.locations[:, 0], "y": data.set1.locations[:, 1],
                               "z1": data.set1.values})
        out.csv(d / "z2.csv", {"x": data.set2.locations[:, 0], "y": data.set2.locations[:, 1],
                               "z2": data.set2.values})


# --------------------------------------------------------------------------
# argument parsing

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--no-provenance", action="store_true", help="omit the '#' provenance line")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_args(p, out_default):
    p.add_argument("--model", required=True, help="bundle JSON written by 'train'")
    p.add_argument("--locations", required=True, help="CSV with x,y (and x1.. covariates, a Z2 column)")
    p.add_argument("--given", help="column holding Z2 at each location to condition on")
    p.add_argument("--out", default=out_default)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dck", description="Deep classifier kriging")
    ap.add_argument("--version", action="version", version=f"dck {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic scenario to CSV")
    p.add_argument("--scenario", default="uni_gauss", choices=sorted(TABLE_PRESETS))
    p.add_argument("--config", help="take scenario constants from a run config")
    p.add_argument("--n", type=int, help="number of locations (perfect square)")
    p.add_argument("--out", default="sim", help="output prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", help="collocate, fit quantile lines, project and augment")
    p.add_argument("--z1", required=True)
    p.add_argument("--z2", required=True)
    p.add_argument("--m1", type=int, default=5)
    p.add_argument("--taus", default=",".join(f"{t:g}" for t in STUDY_TAUS))
    p.add_argument("--kappa", type=int, default=1)
    p.add_argument("--kappa2", type=int, default=5)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", help="fit a model bundle")
    p.add_argument("--data", help="one-variable CSV x,y,z[,x1..]")
    p.add_argument("--z1")
    p.add_argument("--z2")
    p.add_argument("--config", help="run config or preset name for the model settings")
    p.add_argument("--n-classes", type=int)
    p.add_argument("--delta", type=int)
    p.add_argument("--c", type=float, help="bandwidth constant C")
    p.add_argument("--m1", type=int)
    p.add_argument("--taus")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", default="bundle.json")
    p.add_argument("--log", help="training log CSV")
    p.add_argument("--fused-dir", help="also write fused.csv and lines.csv here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predictive quantiles at new locations")
    _model_args(p, "predictions.csv")
    p.add_argument("--quantiles", default="0.025,0.5,0.975")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("exceedance", help="P(Y1 > threshold) at new locations")
    _model_args(p, "exceedance.csv")
    p.add_argument("--threshold", type=float, required=True)
    p.set_defaults(func=cmd_exceedance)

    p = sub.add_parser("pit", help="probability integral transform of observations")
    _model_args(p, "pit.csv")
    p.add_argument("--obs", help="observation column (default: y1_true, z1, z or truth)")
    p.set_defaults(func=cmd_pit)

    p = sub.add_parser("evaluate", help="MAE, PICP and AL of a prediction CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("evaluate-joint", help="energy and variogram scores of joint samples")
    p.add_argument("--samples", required=True, help="CSV site,y1,y2 (site is a 0-based row of --obs)")
    p.add_argument("--obs", required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate_joint)

    p = sub.add_parser("baseline-krige", help="Gaussian-process (co-)kriging predictions")
    p.add_argument("--train", help="one-variable CSV x,y,z[,x1..]")
    p.add_argument("--z1")
    p.add_argument("--z2")
    p.add_argument("--targets", required=True)
    p.add_argument("--family", default="exponential", choices=("exponential", "matern", "bivariate_matern"))
    p.add_argument("--params", default="", help="e.g. range=0.5,sigma=1 or range1=..,nu1=..,rho12=..")
    p.add_argument("--nugget", type=float, default=0.0)
    p.add_argument("--trend", default="zero", choices=baseline.TRENDS)
    p.add_argument("--estimate", action="store_true", help="maximum-likelihood parameters")
    p.add_argument("--given", help="column of Z2 at the targets to condition on")
    p.add_argument("--out", default="kriging.csv")
    p.set_defaults(func=cmd_baseline_krige)

    p = sub.add_parser("run", help="simulate, fit, predict and score one replicate")
    p.add_argument("--config", required=True, help="TOML/JSON file or preset name")
    p.add_argument("--out-dir", default="run")
    p.set_defaults(func=cmd_run)
    _common(p)
    p.set_defaults(seed=None)

    p = sub.add_parser("replicate", help="replicate a table of the simulation study")
    p.add_argument("--table", choices=sorted(pipeline.TABLES), default="tableS1")
    p.add_argument("--scenario")
    p.add_argument("--config", help="replicate a single config instead of a table")
    p.add_argument("--replicates", type=int)
    p.add_argument("--ck-mode", choices=pipeline.CK_MODES)
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_replicate)
    _common(p)
    p.set_defaults(seed=None)

    p = sub.add_parser("ingest", help="validate Z1/Z2 CSV files")
    p.add_argument("--z1", required=True)
    p.add_argument("--z2", required=True)
    p.add_argument("--hull-target", type=int, help="keep this many Z2 sites inside the Z1 convex hull")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_ingest)

    for name, p in sub.choices.items():
        if name not in ("run", "replicate"):
            _common(p)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    seed = 0 if args.seed is None else args.seed
    out = Outputs(_args_digest(args), seed, enabled=not args.no_provenance,
                  force=args.force or args.command in ("run", "replicate"))
    try:
        args.func(args, out)
    except ConfigError as exc:
        out.rollback()
        print(f"dck {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DCKError, OSError) as exc:
        out.rollback()
        print(f"dck {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except BaseException:
        out.rollback()
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
