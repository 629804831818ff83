"""End-to-end DCK and co-kriging runs on simulated scenarios, and the replicate harness."""
from __future__ import annotations

import logging
import multiprocessing
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import baseline
from .bundle import ModelBundle
from .cdf import BandwidthRule, PredictiveCDF
from .classifier import TrainConfig, TrainResult, train
from .core import BiSampleSets, ConfigError, DCKError, RngSeedPolicy, UniDataset
from .discretize import assign_labels, bivariate_partition, univariate_partition
from .embed import EmbeddingSpec, embed
from .fusion import FusionConfig, FusionResult, fuse
from .metrics import ResultTable, energy_score, mae, picp_al, variogram_score
from .simgen import CovarianceSpec, ScenarioConfig, ScenarioLayout

log = logging.getLogger(__name__)

CK_MODES = ("plugin", "ml")
TABLES = {"tableS1": ("uni_gauss", "uni_tukey"), "table2": ("bi_gauss", "bi_tukey")}


@dataclass(frozen=True)
class DCKConfig:
    n_classes: int = 30
    delta: int = 15
    c: float = 12.0
    mad_scale: float = 1.0
    alpha: float = 0.05
    fusion: FusionConfig = field(default_factory=FusionConfig)
    embedding: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_classes < 2 or self.delta < 1 or self.c < 1 or not 0 < self.alpha < 1:
            raise ConfigError("need n_classes >= 2, delta >= 1, C >= 1 and alpha in (0, 1)")
        if not self.mad_scale > 0:
            raise ConfigError("mad_scale must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        d["fusion"]["taus"] = list(self.fusion.taus)
        return d


@dataclass
class FittedDCK:
    bundle: ModelBundle
    training: TrainResult
    fusion: Optional[FusionResult] = None


def _train_bundle(locations, covariates, labels, partition, h, p, cfg: DCKConfig, seed, meta):
    emb = cfg.embedding.build(locations)
    x = embed(locations, covariates, emb)
    n_cov = 0 if covariates is None else np.asarray(covariates).reshape(len(x), -1).shape[1]
    result = train(x, labels, partition.n, replace(cfg.train, seed=int(seed)), n_cov)
    meta = dict(meta, n_covariates=n_cov, train=replace(cfg.train, seed=int(seed)).to_dict(),
                best_epoch=result.best_epoch, stopped_epoch=result.stopped_epoch)
    return ModelBundle(emb, result.params, partition, h, p, meta), result


def fit_univariate(data: UniDataset, cfg: DCKConfig = DCKConfig(), seed: int = 0) -> FittedDCK:
    part = univariate_partition(data.values, cfg.n_classes)
    labeled = assign_labels(part, data.locations, values=data.values, covariates=data.covariates)
    rule = BandwidthRule.from_values(data.values, cfg.c, cfg.mad_scale)
    bundle, result = _train_bundle(data.locations, data.covariates, labeled.labels, part, rule.h, 1,
                                   cfg, seed, {"sigma_h": rule.sigma_h, "n_train": len(data), "C": cfg.c})
    return FittedDCK(bundle, result)


def fit_bivariate(data: BiSampleSets, cfg: DCKConfig = DCKConfig(), seed: int = 0) -> FittedDCK:
    fused = fuse(data, cfg.fusion)
    part = bivariate_partition(fused.z2, fused.z1, fused.line, fused.lines, cfg.delta)
    labeled = assign_labels(part, fused.locations, z2=fused.z2, z1=fused.z1, line_index=fused.line)
    rule = BandwidthRule.from_values(np.column_stack([fused.z1, fused.z2]), cfg.c, cfg.mad_scale)
    meta = {"sigma_h": rule.sigma_h, "n_train": len(fused), "C": cfg.c, "n1": data.n1, "n2": data.n2,
            "fusion": {"m1": cfg.fusion.m1, "taus": list(cfg.fusion.taus), "kappa": cfg.fusion.kappa,
                       "kappa2": cfg.fusion.kappa2}}
    bundle, result = _train_bundle(fused.locations, None, labeled.labels, part, rule.h, 2, cfg, seed, meta)
    return FittedDCK(bundle, result, fused)


def interval_metrics(median, lower, upper, truth) -> dict:
    picp, al = picp_al(lower, upper, truth)
    return {"mae": mae(median, truth), "picp": picp, "al": al}


def joint_scores(samples, truth, beta: float = 0.5) -> dict:
    return {"es": energy_score(samples, truth), "vs": variogram_score(samples, truth, beta)}


# --------------------------------------------------------------------------
# one replicate, one method

def dck_univariate(scn, cfg: DCKConfig, seed: int):
    fit = fit_univariate(scn.train, cfg, seed)
    pred = fit.bundle.predictive(scn.test.locations, scn.test.covariates)
    lo, hi = pred.interval(cfg.alpha)
    return interval_metrics(pred.median(), lo, hi, scn.test_truth), fit


def dck_bivariate(scn, cfg: DCKConfig, seed: int, joint_samples: int = 0):
    fit = fit_bivariate(scn.data, cfg, seed)
    pred = fit.bundle.predictive(scn.test_locations)
    lo, hi = pred.interval(cfg.alpha, given_y2=scn.test_z2)
    out = interval_metrics(pred.median(given_y2=scn.test_z2), lo, hi, scn.test_truth[:, 0])
    if joint_samples:
        rng = RngSeedPolicy(int(seed)).generator("sampling")
        out.update(joint_scores(pred.sample(joint_samples, rng), scn.test_truth))
    return out, fit


def _ck_spec(config: ScenarioConfig) -> CovarianceSpec:
    if config.name == "uni_tukey":
        # the transformed field has no Gaussian truth; an exponential is estimated instead
        return CovarianceSpec.exponential(config.effect_alpha, config.effect_sigma)
    return config.covariance()


def ck_univariate(scn, mode: str = "plugin", seed: int = 0, **fit_options):
    cfg = scn.config
    if mode not in CK_MODES:
        raise ConfigError(f"CK mode must be one of {CK_MODES}")
    spec = _ck_spec(cfg)
    trend = "linear" if scn.train.covariates is not None else "zero"
    estimate = mode == "ml" or cfg.name == "uni_tukey"
    model = baseline.fit(scn.train, spec, estimate=estimate, nugget=cfg.sigma_eps**2, trend=trend,
                         seed=seed, **fit_options)
    mean, sd = baseline.predict(model, scn.test.locations, covariates=scn.test.covariates)
    lo, hi = baseline.interval(mean, sd)
    return interval_metrics(mean, lo, hi, scn.test_truth), model


def ck_bivariate(scn, mode: str = "plugin", seed: int = 0, joint_samples: int = 0, **fit_options):
    cfg = scn.config
    if mode not in CK_MODES:
        raise ConfigError(f"CK mode must be one of {CK_MODES}")
    nug = cfg.sigma_eps**2
    model = baseline.fit(scn.data, cfg.covariance(), estimate=mode == "ml", nugget=(nug, nug),
                         seed=seed, **fit_options)
    mean, sd = baseline.predict(model, scn.test_locations, 1, conditioning=(2, scn.test_z2))
    lo, hi = baseline.interval(mean, sd)
    out = interval_metrics(mean, lo, hi, scn.test_truth[:, 0])
    if joint_samples:
        mu, cov = baseline.predict_joint(model, scn.test_locations)
        rng = RngSeedPolicy(int(seed)).generator("sampling")
        out.update(joint_scores(baseline.sample_joint(mu, cov, joint_samples, rng), scn.test_truth))
    return out, model


# --------------------------------------------------------------------------
# replicate harness

@dataclass(frozen=True)
class ReplicateConfig:
    scenario: str
    replicates: int = 10
    seed: int = 0
    n_locations: Optional[int] = None
    ck_mode: str = "plugin"
    methods: tuple = ("DCK", "CK")
    joint_samples: int = 0
    dck: DCKConfig = field(default_factory=DCKConfig)
    ck_options: dict = field(default_factory=dict)     # n_starts / max_evals for estimation
    scenario_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("need at least one replicate")
        if self.ck_mode not in CK_MODES:
            raise ConfigError(f"CK mode must be one of {CK_MODES}")
        bad = set(self.methods) - {"DCK", "CK"}
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")


def draw_replicate(config: ScenarioConfig, seed: int, index: int = 0):
    """(scenario, method seed) of replicate ``index``, as the replicate harness draws it."""
    layout = ScenarioLayout(config, RngSeedPolicy(int(seed)))
    policy = RngSeedPolicy(int(seed)).child(index)
    return layout.draw(policy), policy.master_seed


def run_replicate(layout: ScenarioLayout, rc: ReplicateConfig, index: int) -> list:
    """Rows (method, metrics, seconds) for replicate ``index``; layout is shared."""
    policy = RngSeedPolicy(rc.seed).child(index)
    scn = layout.draw(policy)
    rows = []
    for method in rc.methods:
        t0 = time.perf_counter()
        if method == "DCK":
            if layout.config.bivariate:
                metrics, _ = dck_bivariate(scn, rc.dck, policy.master_seed, rc.joint_samples)
            else:
                metrics, _ = dck_univariate(scn, rc.dck, policy.master_seed)
        elif layout.config.bivariate:
            metrics, _ = ck_bivariate(scn, rc.ck_mode, policy.master_seed, rc.joint_samples,
                                      **rc.ck_options)
        else:
            metrics, _ = ck_univariate(scn, rc.ck_mode, policy.master_seed, **rc.ck_options)
        rows.append((method, metrics, time.perf_counter() - t0))
    return rows


_SHARED = {}


def _worker(index):
    try:
        return index, run_replicate(_SHARED["layout"], _SHARED["rc"], index), None
    except DCKError as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("DCK_WORKERS")
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"DCK_WORKERS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("DCK_WORKERS must be at least 1")
    return n


def replicate(rc: ReplicateConfig, workers: Optional[int] = None):
    """Run all replicates; returns (ResultTable, failures) with rows ordered by replicate."""
    cfg = ScenarioConfig.preset(rc.scenario, rc.n_locations, **rc.scenario_overrides)
    layout = ScenarioLayout(cfg, RngSeedPolicy(rc.seed))
    workers = worker_count() if workers is None else workers
    _SHARED.update(layout=layout, rc=rc)
    try:
        if workers > 1:
            # fork shares the layout's Cholesky factor with the workers without pickling it
            with multiprocessing.get_context("fork").Pool(min(workers, rc.replicates)) as pool:
                results = pool.map(_worker, range(rc.replicates))
        else:
            results = [_worker(i) for i in range(rc.replicates)]
    finally:
        _SHARED.clear()
    table, failures = ResultTable(), []
    for index, rows, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            failures.append((index, err))
            continue
        for method, metrics, seconds in rows:
            table.add(method, index, metrics, seconds)
    if failures:
        log.warning("%d replicate(s) failed and were excluded", len(failures))
    return table, failures
