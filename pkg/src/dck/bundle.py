"""A trained model as one JSON document: embedding, network, classes and bandwidth."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cdf import PredictiveCDF
from .classifier import NetworkParams, predict_proba
from .core import BundleError
from .discretize import ClassPartition
from .embed import EmbeddingConfig, embed

FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    embedding: EmbeddingConfig
    network: NetworkParams
    partition: ClassPartition
    bandwidth_h: float
    p: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.check()

    @property
    def n_covariates(self) -> int:
        return int(self.meta.get("n_covariates", 0))

    def check(self):
        if self.p not in (1, 2) or self.partition.p != self.p:
            raise BundleError(f"response dimension {self.p} disagrees with the partition ({self.partition.p})")
        if not (np.isfinite(self.bandwidth_h) and self.bandwidth_h > 0):
            raise BundleError("bandwidth must be positive")
        want = self.embedding.n_basis + self.n_covariates
        if self.network.n_in != want:
            raise BundleError(f"network input width {self.network.n_in} != {want} features")
        if self.network.n_classes != self.partition.n:
            raise BundleError(f"network has {self.network.n_classes} outputs for {self.partition.n} classes")
        if self.p == 2:
            nodes = self.partition.nodes
            line = self.partition.class_line
            a = np.array([ln.a for ln in self.partition.lines])[line]
            b = np.array([ln.b for ln in self.partition.lines])[line]
            if np.max(np.abs(nodes[:, 0] - (a + b * nodes[:, 1])), initial=0.0) > 1e-8:
                raise BundleError("a class node does not lie on its quantile line")

    def features(self, locations, covariates=None) -> np.ndarray:
        if self.n_covariates and covariates is None:
            raise BundleError(f"model expects {self.n_covariates} covariates")
        return embed(locations, covariates if self.n_covariates else None, self.embedding)

    def probabilities(self, locations, covariates=None) -> np.ndarray:
        return predict_proba(self.network, self.features(locations, covariates))

    def predictive(self, locations, covariates=None) -> PredictiveCDF:
        return PredictiveCDF(self.probabilities(locations, covariates), self.partition.nodes,
                             self.bandwidth_h)

    def to_dict(self) -> dict:
        return {"format": FORMAT_VERSION, "p": self.p, "bandwidth_h": float(self.bandwidth_h),
                "embedding": self.embedding.to_dict(), "network": self.network.to_dict(),
                "partition": self.partition.to_dict(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        missing = [k for k in ("embedding", "network", "partition", "bandwidth_h", "p", "meta") if k not in d]
        if missing:
            raise BundleError(f"bundle lacks {missing}")
        try:
            return cls(EmbeddingConfig.from_dict(d["embedding"]), NetworkParams.from_dict(d["network"]),
                       ClassPartition.from_dict(d["partition"]), float(d["bandwidth_h"]), int(d["p"]),
                       dict(d["meta"]))
        except BundleError:
            raise
        except Exception as exc:
            raise BundleError(f"malformed bundle: {exc}") from exc


def dumps(bundle: ModelBundle) -> str:
    return json.dumps(bundle.to_dict(), sort_keys=True, separators=(",", ":"))


def save_bundle(bundle: ModelBundle, path, force: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise BundleError(f"{path} exists; pass force to overwrite")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(bundle))
    os.replace(tmp, path)
    return path


def load_bundle(path) -> ModelBundle:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BundleError(f"cannot read bundle {path}: {exc}") from exc
    return ModelBundle.from_dict(d)
