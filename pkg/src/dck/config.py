"""One document holding every knob of a run, loaded from TOML or JSON.

Sections: top-level ``seed``/``replicates``/``joint_samples``/``methods``,
then ``[scenario]``, ``[dck]``, ``[fusion]``, ``[embedding]``, ``[train]`` and
``[baseline]``. Unknown keys anywhere are an error.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import __version__
from .classifier import TrainConfig
from .core import ConfigError, DCKError
from .embed import EmbeddingSpec
from .fusion import FusionConfig
from .pipeline import CK_MODES, DCKConfig, ReplicateConfig
from .simgen import ScenarioConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TOP_LEVEL = ("seed", "replicates", "joint_samples", "methods", "scenario", "dck", "fusion",
             "embedding", "train", "baseline")
DCK_SCALARS = ("n_classes", "delta", "c", "mad_scale", "alpha")


@dataclass(frozen=True)
class BaselineConfig:
    mode: str = "plugin"
    n_starts: int = 3
    max_evals: int = 300

    def __post_init__(self):
        if self.mode not in CK_MODES:
            raise ConfigError(f"baseline mode must be one of {CK_MODES}")
        if self.n_starts < 1 or self.max_evals < 1:
            raise ConfigError("n_starts and max_evals must be positive")

    @property
    def fit_options(self) -> dict:
        return {"n_starts": self.n_starts, "max_evals": self.max_evals}


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    dck: DCKConfig = field(default_factory=DCKConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    seed: int = 0
    replicates: int = 10
    joint_samples: int = 0
    methods: tuple = ("DCK", "CK")

    def to_dict(self) -> dict:
        d = self.dck.to_dict()
        return {
            "seed": self.seed, "replicates": self.replicates, "joint_samples": self.joint_samples,
            "methods": list(self.methods), "scenario": self.scenario.to_dict(),
            "dck": {k: d[k] for k in DCK_SCALARS}, "fusion": d["fusion"], "embedding": d["embedding"],
            "train": d["train"], "baseline": dataclasses.asdict(self.baseline),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    def replicate_config(self) -> ReplicateConfig:
        return ReplicateConfig(
            scenario=self.scenario.name, replicates=self.replicates, seed=self.seed,
            n_locations=self.scenario.n_locations, ck_mode=self.baseline.mode, methods=self.methods,
            joint_samples=self.joint_samples, dck=self.dck, ck_options=self.baseline.fit_options,
            scenario_overrides=_scenario_overrides(self.scenario))


def _scenario_overrides(cfg: ScenarioConfig) -> dict:
    base = ScenarioConfig.preset(cfg.name, cfg.n_locations)
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__
            if k not in ("name", "n_locations") and getattr(cfg, k) != getattr(base, k)}


def _check_keys(section: str, got: dict, allowed) -> None:
    if not isinstance(got, dict):
        raise ConfigError(f"[{section}] must be a table")
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def _fields(cls) -> list:
    return [f.name for f in dataclasses.fields(cls)]


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def from_dict(doc: dict) -> RunConfig:
    _check_keys("top level", doc, TOP_LEVEL)
    sc = dict(doc.get("scenario", {}))
    _check_keys("scenario", sc, _fields(ScenarioConfig))
    if "name" not in sc:
        raise ConfigError("[scenario] needs a name")
    name = sc.pop("name")
    n_loc = sc.pop("n_locations", None)
    dck = doc.get("dck", {})
    _check_keys("dck", dck, DCK_SCALARS)
    sections = {"fusion": FusionConfig, "embedding": EmbeddingSpec, "train": TrainConfig,
                "baseline": BaselineConfig}
    for key, cls in sections.items():
        _check_keys(key, doc.get(key, {}), _fields(cls))
    try:
        scenario = ScenarioConfig.preset(name, n_loc, **_tuples(sc))
        scenario.side  # validates the layout size
        dck_cfg = DCKConfig(
            fusion=FusionConfig(**_tuples(doc.get("fusion", {}))),
            embedding=EmbeddingSpec(**doc.get("embedding", {})),
            train=TrainConfig(**_tuples(doc.get("train", {}))),
            **dck)
        return RunConfig(
            scenario=scenario, dck=dck_cfg, baseline=BaselineConfig(**doc.get("baseline", {})),
            seed=int(doc.get("seed", 0)), replicates=int(doc.get("replicates", 10)),
            joint_samples=int(doc.get("joint_samples", 0)),
            methods=tuple(doc.get("methods", ("DCK", "CK"))))
    except ConfigError:
        raise
    except (DCKError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def parse(text: str, suffix: str = ".toml") -> dict:
    try:
        if suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc


def preset_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("dck.presets").iterdir() if p.name.endswith(".toml"))


def load(path_or_preset) -> RunConfig:
    """Read a config file, or a shipped preset when given a bare preset name."""
    path = Path(str(path_or_preset))
    if not path.exists():
        stem = path.name[:-5] if path.name.endswith(".toml") else path.name
        if stem in preset_names():
            text = resources.files("dck.presets").joinpath(stem + ".toml").read_text()
            return from_dict(parse(text))
        raise ConfigError(f"no config file or preset named {path_or_preset!r}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return from_dict(parse(text, path.suffix))


def provenance(digest: str, seed: int) -> str:
    return f"# dck {__version__} config={digest} seed={seed}"
