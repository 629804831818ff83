"""Exact Gaussian-process (co-)kriging with plug-in or ML-estimated covariances."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .core import BiSampleSets, DataError, DCKError, UniDataset, as_locations
from .simgen import CovarianceSpec, covariance_matrix, covariance_value

log = logging.getLogger(__name__)

Z975 = 1.959963984540054
TRENDS = ("zero", "constant", "linear")
MAX_TRAIN = 5000


class KrigingError(DCKError):
    pass


@dataclass(frozen=True)
class KrigingModel:
    """Training observations, covariance and the factorization of their covariance.

    Observations are stacked across variables: ``variables[i]`` (1 or 2) says
    which process ``values[i]`` observes. ``nugget`` holds one measurement-error
    variance per variable.
    """

    spec: CovarianceSpec
    nugget: tuple
    locations: np.ndarray
    variables: np.ndarray
    values: np.ndarray
    trend: str
    covariates: Optional[np.ndarray]
    factor: np.ndarray
    design: np.ndarray
    beta: np.ndarray
    weights: np.ndarray          # K^-1 (z - X beta)
    gls_inv: Optional[np.ndarray]  # (X' K^-1 X)^-1
    loglik: float

    @property
    def n(self) -> int:
        return len(self.values)


def _stack(data):
    if isinstance(data, BiSampleSets):
        loc = np.vstack([data.set1.locations, data.set2.locations])
        var = np.concatenate([np.ones(data.n1, int), np.full(data.n2, 2)])
        val = np.concatenate([data.set1.values, data.set2.values])
        return loc, var, val, None
    if isinstance(data, UniDataset):
        return data.locations, np.ones(len(data), int), data.values, data.covariates
    loc, var, val = data[:3]
    cov = data[3] if len(data) > 3 else None
    return as_locations(loc), np.asarray(var, int), np.asarray(val, float), cov


def _design(trend, variables, covariates, p):
    n = len(variables)
    if trend == "zero":
        return np.zeros((n, 0))
    cols = [(variables == u).astype(float) for u in range(1, p + 1)]
    if trend == "linear":
        if covariates is None:
            raise KrigingError("linear trend needs covariates")
        if p != 1:
            raise KrigingError("linear trend is only supported for univariate kriging")
        cols += list(np.asarray(covariates, float).T)
    return np.column_stack(cols)


def _factorize(spec, nugget, loc, var, val, design):
    k = covariance_matrix(spec, loc, None, var)
    k[np.diag_indices_from(k)] += np.asarray(nugget)[var - 1]
    try:
        chol = linalg.cholesky(k, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise KrigingError("training covariance is not positive definite") from exc
    del k
    solve = lambda b: linalg.cho_solve((chol, True), b, check_finite=False)
    gls_inv = None
    beta = np.zeros(design.shape[1])
    if design.shape[1]:
        kx = solve(design)
        gls = design.T @ kx
        try:
            gls_inv = np.linalg.inv(gls)
        except np.linalg.LinAlgError as exc:
            raise KrigingError("trend design is singular") from exc
        beta = gls_inv @ (kx.T @ val)
    resid = val - design @ beta
    w = solve(resid)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    loglik = -0.5 * (logdet + resid @ w + len(val) * math.log(2 * math.pi))
    return chol, beta, w, gls_inv, loglik


def _build(spec, nugget, loc, var, val, trend, cov):
    if trend not in TRENDS:
        raise KrigingError(f"trend must be one of {TRENDS}")
    nug = tuple(float(v) for v in np.broadcast_to(np.asarray(nugget, float), (spec.p,)))
    if min(nug) < 0:
        raise KrigingError("nugget must be nonnegative")
    design = _design(trend, var, cov, spec.p)
    chol, beta, w, gls_inv, ll = _factorize(spec, nug, loc, var, val, design)
    return KrigingModel(spec, nug, loc, var, val, trend, cov, chol, design, beta, w, gls_inv, ll)


def _pack(spec, nugget):
    theta = [math.log(v) for v in spec.range] + [math.log(v) for v in spec.sigma]
    theta += [math.log(max(v, 1e-6)) for v in nugget]
    if spec.p == 2:
        theta.append(math.atanh(np.clip(spec.rho12, -0.99, 0.99)))
    return np.array(theta)


def _unpack(theta, template: CovarianceSpec):
    p = template.p
    rng = tuple(np.exp(theta[:p]))
    sig = tuple(np.exp(theta[p:2 * p]))
    nug = tuple(np.exp(theta[2 * p:3 * p]))
    rho = math.tanh(theta[3 * p]) if p == 2 else 0.0
    return replace(template, range=rng, sigma=sig, rho12=rho), nug


def estimate_parameters(loc, var, val, spec, nugget, trend="zero", covariates=None,
                        n_starts=3, max_evals=300, seed=0):
    """Maximize the Gaussian log-likelihood over ranges, sds, nuggets (and rho12).

    Smoothness stays fixed. Multi-start Nelder-Mead in log / atanh coordinates,
    each start restarted once from where it stopped (so up to 2 * max_evals
    evaluations per start); the best point found is returned even if no start
    converged.
    """
    design = _design(trend, var, covariates, spec.p)

    def nll(theta):
        if np.any(np.abs(theta) > 30):
            return 1e300
        s, nug = _unpack(theta, spec)
        try:
            return -_factorize(s, nug, loc, var, val, design)[4]
        except KrigingError:
            return 1e300

    nug0 = tuple(np.broadcast_to(np.asarray(nugget, float), (spec.p,)))
    x0 = _pack(spec, nug0)
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.normal(0, 0.5, x0.shape) for _ in range(n_starts - 1)]
    best = None
    opts = {"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-6}
    for start in starts:
        res = optimize.minimize(nll, start, method="Nelder-Mead", options=opts)
        # one restart with a fresh simplex; a collapsed simplex stalls on the range/variance ridge
        again = optimize.minimize(nll, res.x, method="Nelder-Mead", options=opts)
        if again.fun <= res.fun:
            res = again
        if not res.success:
            log.warning("Nelder-Mead did not converge from one start: %s", res.message)
        if best is None or res.fun < best.fun:
            best = res
    return _unpack(best.x, spec)


def fit(data, spec: CovarianceSpec, estimate: bool = False, nugget=0.0, trend: str = "zero",
        n_starts: int = 3, max_evals: int = 300, seed: int = 0) -> KrigingModel:
    """Kriging model for a UniDataset, a BiSampleSets or a (loc, var, val[, cov]) tuple.

    With ``estimate=False`` the given ``spec`` and ``nugget`` are used as they are.
    """
    loc, var, val, cov = _stack(data)
    if len(val) > MAX_TRAIN:
        raise KrigingError(f"{len(val)} observations exceed the dense budget of {MAX_TRAIN}")
    if spec.p == 1 and np.any(var != 1):
        raise KrigingError("univariate spec but observations of a second variable")
    if estimate:
        spec, nugget = estimate_parameters(loc, var, val, spec, nugget, trend, cov,
                                           n_starts, max_evals, seed)
    return _build(spec, nugget, loc, var, val, trend, cov)


def with_observations(model: KrigingModel, locations, variable: int, values,
                      covariates=None) -> KrigingModel:
    """Model refactorized with extra observations (e.g. Z2 at the prediction sites)."""
    loc = as_locations(locations)
    val = np.asarray(values, float).reshape(-1)
    if len(val) != len(loc):
        raise DataError("conditioning values and locations differ in length")
    cov = model.covariates
    if cov is not None:
        if covariates is None:
            raise KrigingError("model has covariates; pass them for the new observations")
        cov = np.vstack([cov, covariates])
    return _build(model.spec, model.nugget, np.vstack([model.locations, loc]),
                  np.concatenate([model.variables, np.full(len(val), variable)]),
                  np.concatenate([model.values, val]), model.trend, cov)


def _solve_lower(model, b):
    return linalg.solve_triangular(model.factor, b, lower=True, check_finite=False)


def _target_design(model, variable, n, covariates):
    q = model.design.shape[1]
    x0 = np.zeros((n, q))
    if q:
        x0[:, variable - 1] = 1.0
        if model.trend == "linear":
            if covariates is None:
                raise KrigingError("linear trend needs covariates at the targets")
            x0[:, model.spec.p:] = covariates
    return x0


def predict(model: KrigingModel, locations, variable: int = 1, conditioning=None,
            covariates=None, chunk: int = 2000):
    """Kriging mean and standard deviation of the latent process at ``locations``.

    ``conditioning`` is an optional ``(variable, values)`` pair observed at the
    same locations, which are added to the training system first (co-kriging
    of Y1 given Z2 at the target).
    """
    loc = as_locations(locations)
    if conditioning is not None:
        cv, cvals = conditioning
        model = with_observations(model, loc, cv, cvals, covariates)
    prior = covariance_value(model.spec, 0.0, (variable, variable))
    means, sds = [], []
    for start in range(0, len(loc), chunk):
        sl = slice(start, start + chunk)
        c0 = covariance_matrix(model.spec, model.locations, loc[sl], model.variables,
                               np.full(len(loc[sl]), variable))
        x0 = _target_design(model, variable, len(loc[sl]),
                            None if covariates is None else np.asarray(covariates)[sl])
        mean = x0 @ model.beta + c0.T @ model.weights
        v = _solve_lower(model, c0)
        var = prior - np.einsum("ij,ij->j", v, v)
        if model.gls_inv is not None:
            kc = linalg.solve_triangular(model.factor.T, v, lower=False, check_finite=False)
            r = x0.T - model.design.T @ kc
            var = var + np.einsum("ij,ik,kj->j", r, model.gls_inv, r)
        means.append(mean)
        sds.append(np.sqrt(np.maximum(var, 0.0)))
    return np.concatenate(means), np.concatenate(sds)


def predict_joint(model: KrigingModel, locations):
    """Per-site bivariate predictive mean (B, 2) and covariance (B, 2, 2)."""
    if model.spec.p != 2:
        raise KrigingError("predict_joint needs a bivariate model")
    loc = as_locations(locations)
    b = len(loc)
    c1 = covariance_matrix(model.spec, model.locations, loc, model.variables, np.ones(b, int))
    c2 = covariance_matrix(model.spec, model.locations, loc, model.variables, np.full(b, 2))
    mean = np.column_stack([
        _target_design(model, 1, b, None) @ model.beta + c1.T @ model.weights,
        _target_design(model, 2, b, None) @ model.beta + c2.T @ model.weights])
    v1, v2 = _solve_lower(model, c1), _solve_lower(model, c2)
    s = model.spec
    cov = np.empty((b, 2, 2))
    cov[:, 0, 0] = s.sigma[0] ** 2 - np.einsum("ij,ij->j", v1, v1)
    cov[:, 1, 1] = s.sigma[1] ** 2 - np.einsum("ij,ij->j", v2, v2)
    cov[:, 0, 1] = cov[:, 1, 0] = s.rho12 * s.sigma[0] * s.sigma[1] - np.einsum("ij,ij->j", v1, v2)
    if model.gls_inv is not None:
        k1 = linalg.solve_triangular(model.factor.T, v1, lower=False, check_finite=False)
        k2 = linalg.solve_triangular(model.factor.T, v2, lower=False, check_finite=False)
        r1 = _target_design(model, 1, b, None).T - model.design.T @ k1
        r2 = _target_design(model, 2, b, None).T - model.design.T @ k2
        cov[:, 0, 0] += np.einsum("ij,ik,kj->j", r1, model.gls_inv, r1)
        cov[:, 1, 1] += np.einsum("ij,ik,kj->j", r2, model.gls_inv, r2)
        cross = np.einsum("ij,ik,kj->j", r1, model.gls_inv, r2)
        cov[:, 0, 1] += cross
        cov[:, 1, 0] += cross
    return mean, cov


def interval(mean, sd, z: float = Z975):
    return mean - z * sd, mean + z * sd


def sample_joint(mean, cov, m: int, seed=None) -> np.ndarray:
    """``m`` draws per site from N(mean_b, cov_b); returns (B, m, 2)."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    out = np.empty((len(mean), m, 2))
    for b in range(len(mean)):
        w, v = np.linalg.eigh(cov[b])
        root = v * np.sqrt(np.maximum(w, 0.0))
        out[b] = mean[b] + rng.standard_normal((m, 2)) @ root.T
    return out
