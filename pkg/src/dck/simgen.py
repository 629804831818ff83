"""Synthetic spatial fields for the simulation studies.

Covariances follow the (bivariate) Matérn family

    C_uv(d) = rho_uv * sigma_u * sigma_v * M(d; nu_uv, alpha_uv),
    M(d; nu, alpha) = 2^(1-nu) / Gamma(nu) * (d/alpha)^nu * K_nu(d/alpha),

where ``sigma_u`` are marginal standard deviations and ``rho_11 = rho_22 = 1``.
``nu = 0.5`` gives ``exp(-d/alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special
from scipy.spatial.distance import cdist, pdist, squareform

from .core import (BiSampleSets, DataError, DCKError, RngSeedPolicy, UniDataset, as_generator,
                   as_locations)

JITTER_LEVELS = (0.0,) + tuple(10.0 ** -k for k in range(10, 3, -1))
MAX_SCALAR_OUTPUTS = 10_000
FAMILIES = ("exponential", "matern", "bivariate_matern")


class CovarianceError(DCKError):
    pass


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance model; ``sigma`` holds marginal standard deviations.

    For ``exponential`` only ``range[0]`` (gamma) and ``sigma[0]`` are used and
    ``smoothness`` is fixed at 0.5. Bivariate specs carry two entries per tuple;
    the cross range and smoothness are the arithmetic means of the marginal ones.
    """

    family: str
    range: tuple
    smoothness: tuple = (0.5,)
    sigma: tuple = (1.0,)
    rho12: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CovarianceError(f"unknown covariance family {self.family!r}")
        rng_, nu, sig = (tuple(float(v) for v in t) for t in (self.range, self.smoothness, self.sigma))
        want = 2 if self.family == "bivariate_matern" else 1
        if self.family == "exponential":
            nu = (0.5,)
        for name, t in (("range", rng_), ("smoothness", nu), ("sigma", sig)):
            if len(t) != want:
                raise CovarianceError(f"{self.family} needs {want} {name} value(s), got {len(t)}")
            if not all(v > 0 and math.isfinite(v) for v in t):
                raise CovarianceError(f"{name} values must be positive, got {t}")
        if not -1.0 <= self.rho12 <= 1.0:
            raise CovarianceError("rho12 must lie in [-1, 1]")
        object.__setattr__(self, "range", rng_)
        object.__setattr__(self, "smoothness", nu)
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "rho12", float(self.rho12))

    @classmethod
    def exponential(cls, gamma: float, sigma: float = 1.0) -> "CovarianceSpec":
        return cls("exponential", (gamma,), (0.5,), (sigma,))

    @classmethod
    def matern(cls, nu: float, alpha: float, sigma: float = 1.0) -> "CovarianceSpec":
        return cls("matern", (alpha,), (nu,), (sigma,))

    @classmethod
    def bivariate(cls, alpha, nu, sigma, rho12) -> "CovarianceSpec":
        return cls("bivariate_matern", tuple(alpha), tuple(nu), tuple(sigma), rho12)

    @property
    def p(self) -> int:
        return 2 if self.family == "bivariate_matern" else 1

    def pair_params(self, u: int, v: int):
        """(scale, nu, alpha) of C_uv, with 1-based variable indices."""
        if u not in (1, 2) or v not in (1, 2) or max(u, v) > self.p:
            raise CovarianceError(f"pair ({u}, {v}) invalid for a {self.p}-variate spec")
        if u == v:
            return self.sigma[u - 1] ** 2, self.smoothness[u - 1], self.range[u - 1]
        return (self.rho12 * self.sigma[0] * self.sigma[1],
                0.5 * (self.smoothness[0] + self.smoothness[1]),
                0.5 * (self.range[0] + self.range[1]))

    def to_dict(self) -> dict:
        return {"family": self.family, "range": list(self.range),
                "smoothness": list(self.smoothness), "sigma": list(self.sigma),
                "rho12": self.rho12}

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceSpec":
        return cls(d["family"], tuple(d["range"]), tuple(d.get("smoothness", (0.5,))),
                   tuple(d.get("sigma", (1.0,))), d.get("rho12", 0.0))


def matern_correlation(distance, nu: float, alpha: float) -> np.ndarray:
    """Matérn correlation M(d; nu, alpha), equal to 1 at d = 0."""
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d < 0):
        raise DataError("distances must be nonnegative")
    x = d / alpha
    out = np.ones_like(x)
    pos = x > 1e-12
    xp = x[pos]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        val = 2.0 ** (1.0 - nu) / special.gamma(nu) * xp ** nu * special.kv(nu, xp)
    # kv underflows to 0 for large arguments, which is the right limit
    out[pos] = np.where(np.isfinite(val), val, 0.0)
    return out


def covariance_value(spec: CovarianceSpec, distance, pair=(1, 1)):
    scale, nu, alpha = spec.pair_params(*pair)
    if spec.family == "exponential":
        d = np.asarray(distance, dtype=np.float64)
        if np.any(d < 0):
            raise DataError("distances must be nonnegative")
        out = scale * np.exp(-d / alpha)
    else:
        out = scale * matern_correlation(distance, nu, alpha)
    return float(out) if np.ndim(out) == 0 else out


def covariance_matrix(spec: CovarianceSpec, loc_a, loc_b=None, var_a=None, var_b=None) -> np.ndarray:
    """Covariance between observations at ``loc_a`` of variables ``var_a`` and at ``loc_b``.

    ``var_*`` are arrays of 1-based variable indices (default all 1).
    """
    loc_a = as_locations(loc_a)
    var_a = np.ones(len(loc_a), int) if var_a is None else np.asarray(var_a)
    if loc_b is None and var_b is None:
        return _symmetric_covariance(spec, loc_a, var_a)
    loc_b = loc_a if loc_b is None else as_locations(loc_b)
    var_b = np.ones(len(loc_b), int) if var_b is None else np.asarray(var_b)
    d = cdist(loc_a, loc_b)
    out = np.empty_like(d)
    for u in range(1, spec.p + 1):
        ia = np.flatnonzero(var_a == u)
        for v in range(1, spec.p + 1):
            ib = np.flatnonzero(var_b == v)
            if len(ia) and len(ib):
                out[np.ix_(ia, ib)] = covariance_value(spec, d[np.ix_(ia, ib)], (u, v))
    return out


def _symmetric_covariance(spec: CovarianceSpec, loc, var) -> np.ndarray:
    # a square system: diagonal blocks from the condensed triangle, cross blocks mirrored
    out = np.empty((len(loc), len(loc)))
    groups = [np.flatnonzero(var == u) for u in range(1, spec.p + 1)]
    for u, ia in enumerate(groups, start=1):
        if not len(ia):
            continue
        block = squareform(covariance_value(spec, pdist(loc[ia]), (u, u)), checks=False)
        np.fill_diagonal(block, covariance_value(spec, 0.0, (u, u)))
        out[np.ix_(ia, ia)] = block
        for v in range(u + 1, spec.p + 1):
            ib = groups[v - 1]
            if len(ib):
                cross = covariance_value(spec, cdist(loc[ia], loc[ib]), (u, v))
                out[np.ix_(ia, ib)] = cross
                out[np.ix_(ib, ia)] = cross.T
    return out


def cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding lambda * mean(diag) for lambda = 1e-10 .. 1e-4 if needed."""
    scale = float(np.mean(np.diag(cov)))
    for lam in JITTER_LEVELS:
        try:
            a = cov + lam * scale * np.eye(len(cov)) if lam else cov
            return linalg.cholesky(a, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise CovarianceError("covariance matrix not positive definite after jitter 1e-4")


class GaussianField:
    """Zero-mean (multivariate) Gaussian field on a fixed set of locations.

    The Cholesky factor is computed once; each :meth:`sample` is a cheap
    triangular product, which matters when replicates share a layout.
    """

    def __init__(self, locations, spec: CovarianceSpec):
        self.locations = as_locations(locations)
        self.spec = spec
        n = len(self.locations)
        if n * spec.p > MAX_SCALAR_OUTPUTS:
            raise DataError(f"{n * spec.p} outputs exceed the dense budget of {MAX_SCALAR_OUTPUTS}")
        # every block is symmetric in the locations, so only the condensed upper triangle is evaluated
        d = pdist(self.locations)
        cov = np.empty((spec.p * n, spec.p * n))
        for u in range(spec.p):
            for v in range(u, spec.p):
                block = squareform(covariance_value(spec, d, (u + 1, v + 1)), checks=False)
                np.fill_diagonal(block, covariance_value(spec, 0.0, (u + 1, v + 1)))
                cov[u * n:(u + 1) * n, v * n:(v + 1) * n] = block
                if u != v:
                    cov[v * n:(v + 1) * n, u * n:(u + 1) * n] = block
        del d
        self.factor = cholesky_with_jitter(cov)

    def sample(self, seed=None, mean=None) -> np.ndarray:
        rng = as_generator(seed)
        n = len(self.locations)
        y = self.factor @ rng.standard_normal(self.factor.shape[0])
        y = y.reshape(self.spec.p, n).T
        if self.spec.p == 1:
            y = y[:, 0]
        if mean is not None:
            y = y + (mean(self.locations) if callable(mean) else np.asarray(mean))
        return y


def sample_gp(locations, spec: CovarianceSpec, mean=None, seed=None) -> np.ndarray:
    """One draw of the field; shape (N,) for univariate specs, (N, 2) otherwise."""
    return GaussianField(locations, spec).sample(seed, mean)


def perturbed_grid(side: int, jitter: float, seed=None, max_redraws: int = 100) -> np.ndarray:
    """``side`` x ``side`` grid on the unit square plus Uniform[-jitter, jitter] offsets."""
    if side < 2:
        raise DataError("side must be at least 2")
    if jitter < 0:
        raise DataError("jitter must be nonnegative")
    rng = as_generator(seed)
    g = np.linspace(0.0, 1.0, side)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    base = np.column_stack([xx.ravel(), yy.ravel()])
    pts = base + rng.uniform(-jitter, jitter, size=base.shape)
    for _ in range(max_redraws):
        _, first = np.unique(pts, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(len(pts)), first)
        if not len(dup):
            return pts
        pts[dup] = base[dup] + rng.uniform(-jitter, jitter, size=(len(dup), 2))
    raise DataError("could not remove duplicate locations after re-drawing")


@dataclass(frozen=True)
class TukeyGH:
    g: float = 0.0
    h_tail: float = 0.0

    def __post_init__(self):
        if self.h_tail < 0:
            raise DataError("Tukey tail parameter must be nonnegative")


def tukey_gh(values, params: TukeyGH) -> np.ndarray:
    z = np.asarray(values, dtype=np.float64)
    tail = np.exp(params.h_tail * z * z / 2.0)
    if params.g == 0:
        return z * tail
    return np.expm1(params.g * z) / params.g * tail


def nonlinear_mean(covariates) -> np.ndarray:
    """Mean surface driven by five covariates; accepts one row or an (N, 5) array."""
    x = np.asarray(covariates, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != 5:
        raise DataError(f"nonlinear_mean needs exactly 5 covariates, got {x.shape[1]}")
    x1, x2, x3, x4, x5 = x.T
    mu = (x1**2 - x2**2 + x3**2 - x4**2 - x5**2 + 2 * x1 * x2 + 3 * x2 * x3
          - 2 * x3 * x5 + 10 * x1 * x4 + np.sin(x1) * x2 * x3 + np.cos(x2) * x3 * x5
          + x1 * x2 * x4 * x5)
    return float(mu[0]) if single else mu


@dataclass(frozen=True)
class NoiseSpec:
    sigma_eps: float = 0.0

    def __post_init__(self):
        if self.sigma_eps < 0:
            raise DataError("sigma_eps must be nonnegative")


def add_noise(values, spec: NoiseSpec, seed=None) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if spec.sigma_eps == 0:
        return v.copy()
    return v + spec.sigma_eps * as_generator(seed).standard_normal(v.shape)


# --------------------------------------------------------------------------
# scenarios

SCENARIOS = ("uni_gauss", "uni_tukey", "bi_gauss", "bi_tukey")


@dataclass(frozen=True)
class ScenarioConfig:
    """Constants of one simulation scenario; defaults are filled per name."""

    name: str
    n_locations: int = 1600
    jitter: float = 0.4
    sigma_eps: float = 0.0
    test_fraction: float = 0.1
    # univariate Gaussian
    gamma: float = 0.5
    # univariate non-Gaussian
    covariate_sigma: float = 0.9
    covariate_nu: float = 0.5
    covariate_alpha: float = 0.1
    effect_sigma: float = 0.7
    effect_nu: float = 0.5
    effect_alpha: float = 0.2
    # bivariate
    alpha: tuple = (0.2, 0.4)
    nu: tuple = (0.8, 0.8)
    sigma2: tuple = (0.89, 1.3)
    rho12: float = 0.8
    n_test: int = 100
    n_z1: int = 500
    # Tukey g-and-h (used by *_tukey)
    tukey_g: float = 0.0
    tukey_h: float = 0.0

    @classmethod
    def preset(cls, name: str, n_locations: int = None, **overrides) -> "ScenarioConfig":
        if name not in SCENARIOS:
            raise DataError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
        base = {
            "uni_gauss": dict(n_locations=1600, sigma_eps=0.0),
            "uni_tukey": dict(n_locations=1600, sigma_eps=0.0, tukey_g=0.8, tukey_h=0.5),
            "bi_gauss": dict(n_locations=3600, sigma_eps=0.1),
            "bi_tukey": dict(n_locations=3600, sigma_eps=0.1, tukey_g=0.5, tukey_h=0.5),
        }[name]
        if n_locations is not None:
            base["n_locations"] = n_locations
        base.update(overrides)
        return cls(name=name, **base)

    @property
    def side(self) -> int:
        side = math.isqrt(self.n_locations)
        if side * side != self.n_locations:
            raise DataError(f"n_locations must be a perfect square, got {self.n_locations}")
        return side

    @property
    def bivariate(self) -> bool:
        return self.name.startswith("bi_")

    def covariance(self) -> CovarianceSpec:
        if self.name == "uni_gauss":
            return CovarianceSpec.exponential(self.gamma)
        if self.name == "uni_tukey":
            return CovarianceSpec.matern(self.effect_nu, self.effect_alpha, self.effect_sigma)
        return CovarianceSpec.bivariate(self.alpha, self.nu, tuple(math.sqrt(s) for s in self.sigma2),
                                        self.rho12)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


@dataclass
class UnivariateScenario:
    config: ScenarioConfig
    train: UniDataset
    test: UniDataset          # values hold the noisy observations Z
    test_truth: np.ndarray    # latent Y at the test locations


@dataclass
class BivariateScenario:
    config: ScenarioConfig
    data: BiSampleSets
    test_locations: np.ndarray
    test_truth: np.ndarray    # (n_test, 2) latent (Y1, Y2)
    test_z2: np.ndarray       # noisy Z2 at the test locations, the conditioning variable
    test_z1: np.ndarray


class ScenarioLayout:
    """Locations, train/test split and GP factors shared by all replicates of a scenario."""

    def __init__(self, config: ScenarioConfig, policy: RngSeedPolicy):
        self.config = config
        rng = policy.generator("layout")
        self.locations = perturbed_grid(config.side, config.jitter, rng)
        n = len(self.locations)
        perm = rng.permutation(n)
        if config.bivariate:
            self.test_idx = np.sort(perm[: config.n_test])
            self.train_idx = np.sort(perm[config.n_test:])
            self.z1_idx = np.sort(rng.choice(self.train_idx, size=config.n_z1, replace=False))
        else:
            n_test = int(round(config.test_fraction * n))
            self.test_idx = np.sort(perm[:n_test])
            self.train_idx = np.sort(perm[n_test:])
        self.field = GaussianField(self.locations, config.covariance())
        self.covariate_field = None
        if config.name == "uni_tukey":
            self.covariate_field = GaussianField(
                self.locations,
                CovarianceSpec.matern(config.covariate_nu, config.covariate_alpha, config.covariate_sigma))

    def draw(self, policy: RngSeedPolicy):
        cfg = self.config
        rng = policy.generator("simulation")
        noise = NoiseSpec(cfg.sigma_eps)
        tk = TukeyGH(cfg.tukey_g, cfg.tukey_h)
        if cfg.bivariate:
            y = self.field.sample(rng)
            if cfg.name == "bi_tukey":
                y = tukey_gh(y, tk)
            z = add_noise(y, noise, rng)
            set1 = UniDataset(self.locations[self.z1_idx], z[self.z1_idx, 0])
            set2 = UniDataset(self.locations[self.train_idx], z[self.train_idx, 1])
            t = self.test_idx
            return BivariateScenario(cfg, BiSampleSets(set1, set2), self.locations[t], y[t],
                                     z[t, 1], z[t, 0])
        cov = None
        if cfg.name == "uni_tukey":
            cov = np.column_stack([self.covariate_field.sample(rng) for _ in range(5)])
            y = nonlinear_mean(cov) + tukey_gh(self.field.sample(rng), tk)
        else:
            y = self.field.sample(rng)
        z = add_noise(y, noise, rng)
        tr, te = self.train_idx, self.test_idx
        sub = (lambda i: None) if cov is None else (lambda i: cov[i])
        return UnivariateScenario(cfg, UniDataset(self.locations[tr], z[tr], sub(tr)),
                                  UniDataset(self.locations[te], z[te], sub(te)), y[te])


def scenario(name: str, n_locations: int = None, seed=0, **overrides):
    """Draw one replicate of a named scenario (layout and field from the same seed)."""
    policy = seed if isinstance(seed, RngSeedPolicy) else RngSeedPolicy(int(seed))
    cfg = ScenarioConfig.preset(name, n_locations, **overrides)
    return ScenarioLayout(cfg, policy).draw(policy)


# --------------------------------------------------------------------------
# large synthetic bivariate data (beyond the dense Cholesky budget)

class FourierField:
    """Zero-mean, unit-variance Gaussian-like field from random Fourier features.

    The covariance approximates a squared exponential with the given length
    scale. Unlike ``sample_gp`` it can be evaluated at any number of points,
    and repeated calls see the same realization.
    """

    def __init__(self, lengthscale: float, n_features: int = 400, seed=None):
        if not lengthscale > 0 or n_features < 1:
            raise DataError("lengthscale and n_features must be positive")
        rng = as_generator(seed)
        self.freq = rng.standard_normal((n_features, 2)) / lengthscale
        self.phase = rng.uniform(0.0, 2.0 * np.pi, n_features)
        self.coef = rng.standard_normal(n_features) * np.sqrt(2.0 / n_features)

    def __call__(self, locations) -> np.ndarray:
        loc = as_locations(locations)
        return np.cos(loc @ self.freq.T + self.phase) @ self.coef


@dataclass
class AirQualityLike:
    """Sparse skewed Z1 sites and dense Z2 sites over a lon/lat-like box."""

    data: BiSampleSets
    bbox: tuple
    latent1: FourierField
    latent2: FourierField
    z2_noise: float

    def z2_at(self, locations, seed=None) -> np.ndarray:
        """Noisy Z2 readings at new sites (the gridded covariate is available everywhere)."""
        rng = as_generator(seed)
        return self.z2_surface(locations) + self.z2_noise * rng.standard_normal(len(as_locations(locations)))

    def z2_surface(self, locations) -> np.ndarray:
        g2 = 0.8 * self.latent1(locations) + 0.6 * self.latent2(locations)
        return 9.0 + 3.0 * tukey_gh(g2, TukeyGH(0.3, 0.05))

    def y1_surface(self, locations) -> np.ndarray:
        return 35.0 + 10.0 * tukey_gh(self.latent1(locations), TukeyGH(0.5, 0.1))


def air_quality_like(n1: int = 1000, n2: int = 10000, seed=0,
                     bbox=(-125.0, 25.0, -67.0, 49.0)) -> AirQualityLike:
    """Synthetic stand-in for a monitor network (Z1) plus a model grid (Z2).

    Z1 is an AQI-like skewed response at ``n1`` scattered sites; Z2 a
    correlated PM-like response at ``n2`` sites. The two site sets are drawn
    independently, so they do not overlap.
    """
    if n1 < 3 or n2 < n1:
        raise DataError("need n1 >= 3 and n2 >= n1")
    rng = as_generator(seed)
    x0, y0, x1, y1 = bbox
    scale = 0.15 * max(x1 - x0, y1 - y0)
    lat1 = FourierField(scale, seed=rng)
    lat2 = FourierField(0.5 * scale, seed=rng)
    out = AirQualityLike(None, tuple(bbox), lat1, lat2, 0.3)

    def sites(n):
        return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])

    s1, s2 = sites(n1), sites(n2)
    z1 = out.y1_surface(s1) + 2.0 * rng.standard_normal(n1)
    z2 = out.z2_at(s2, rng)
    out.data = BiSampleSets(UniDataset(s1, z1), UniDataset(s2, z2))
    return out
