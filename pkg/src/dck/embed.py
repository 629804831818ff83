"""Multi-resolution Wendland basis features for spatial coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import ConfigError, DataError, as_locations

MARGIN = 0.05


def wendland(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    c = np.clip(1.0 - d, 0.0, None)
    return c**6 / 3.0 * (35.0 * d * d + 18.0 * d + 3.0)


@dataclass(frozen=True)
class EmbeddingConfig:
    grids: tuple          # g_l per level
    etas: tuple           # support radius per level
    bbox: tuple           # xmin, ymin, xmax, ymax (with margin)
    overlap: float = 2.5

    def __post_init__(self):
        if len(self.grids) != len(self.etas) or not self.grids:
            raise ConfigError("need one eta per level and at least one level")
        for g in self.grids:
            if g < 3 or g % 2 == 0:
                raise ConfigError(f"grid size {g} must be odd and at least 3")
        if any(b <= a for a, b in zip(self.grids, self.grids[1:])):
            raise ConfigError("grid sizes must increase across levels")
        if any(not e > 0 for e in self.etas):
            raise ConfigError("eta must be positive")
        x0, y0, x1, y1 = self.bbox
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("bounding box has zero area")

    @property
    def n_basis(self) -> int:
        return int(sum(g * g for g in self.grids))

    def knots(self, level: int) -> np.ndarray:
        g = self.grids[level]
        x0, y0, x1, y1 = self.bbox
        gx, gy = np.linspace(x0, x1, g), np.linspace(y0, y1, g)
        yy, xx = np.meshgrid(gy, gx, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])  # row-major: y rows, x fastest

    def to_dict(self) -> dict:
        return {"levels": [{"g": int(g), "eta": float(e)} for g, e in zip(self.grids, self.etas)],
                "bbox": [float(v) for v in self.bbox], "overlap": float(self.overlap)}

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingConfig":
        return cls(tuple(int(v["g"]) for v in d["levels"]), tuple(float(v["eta"]) for v in d["levels"]),
                   tuple(float(v) for v in d["bbox"]), float(d.get("overlap", 2.5)))


@dataclass(frozen=True)
class EmbeddingSpec:
    """Layout knobs; the bounding box comes from the training locations."""

    levels: int = 3
    base_grid: int = 5
    growth: int = 2
    overlap: float = 2.5

    def build(self, locations) -> EmbeddingConfig:
        return build_config(locations, self.levels, self.base_grid, self.growth, self.overlap)


def level_grids(levels: int, base_grid: int, growth: int) -> tuple:
    # g_l = (base - 1) growth^(l-1) + 1 keeps coarse knots on every finer grid: 5, 9, 17
    return tuple(int((base_grid - 1) * growth**l + 1) for l in range(levels))


def build_config(locations, levels: int = 3, base_grid: int = 5, growth: int = 2,
                 overlap: float = 2.5) -> EmbeddingConfig:
    loc = as_locations(locations)
    if len(np.unique(loc, axis=0)) < 2:
        raise DataError("need at least 2 distinct locations")
    if levels < 1 or growth < 2 or overlap <= 0:
        raise ConfigError("levels >= 1, growth >= 2 and overlap > 0 required")
    lo, hi = loc.min(axis=0), loc.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        raise DataError("degenerate bounding box (zero area)")
    lo, hi = lo - MARGIN * span, hi + MARGIN * span
    grids = level_grids(levels, base_grid, growth)
    width = float(np.max(hi - lo))
    etas = tuple(overlap * width / (g - 1) for g in grids)
    return EmbeddingConfig(grids, etas, (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])), overlap)


def basis(locations, config: EmbeddingConfig, chunk: int = 4096) -> np.ndarray:
    loc = as_locations(locations)
    out = np.empty((len(loc), config.n_basis))
    col = 0
    for level, eta in enumerate(config.etas):
        u = config.knots(level)
        for i in range(0, len(loc), chunk):
            out[i:i + chunk, col:col + len(u)] = wendland(cdist(loc[i:i + chunk], u) / eta)
        col += len(u)
    return out


def embed(locations, covariates, config: EmbeddingConfig) -> np.ndarray:
    """Features X_phi(s): basis values level-major then covariates unchanged."""
    phi = basis(locations, config)
    if covariates is None:
        return phi
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim == 1:
        cov = cov[:, None]
    if len(cov) != len(phi):
        raise DataError(f"{len(cov)} covariate rows for {len(phi)} locations")
    return np.hstack([phi, cov])
