"""Predictive distributions from class probabilities by Gaussian kernel smoothing.

Each location gets the mixture sum_j zhat_j N(node_j, h^2 I). Everything here is
batched: ``probs`` is (B, n) and evaluations return one value per location.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, ndtr

from .core import DataError, DCKError, as_generator

MAD_SCALE = 1.0    # raw MAD; 1.4826 would make it a Gaussian sd estimate
DENSITY_FLOOR = 1e-300
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class ConditioningError(DCKError):
    pass


class QuantileError(DCKError):
    pass


def mad(x, scale: float = MAD_SCALE) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(scale * np.median(np.abs(x - np.median(x))))


@dataclass(frozen=True)
class BandwidthRule:
    """h = p (C / 3) sigma_h N^(-alpha)."""

    p: int
    sigma_h: float
    n: int
    c: float = 12.0
    alpha: float = 1.0 / 3.0

    def __post_init__(self):
        if self.p not in (1, 2):
            raise DataError("p must be 1 or 2")
        if self.c < 1:
            raise DataError("C must be at least 1")
        if not self.sigma_h > 0:
            raise DataError("zero scale: the response is constant (MAD = 0)")
        if self.n < 2:
            raise DataError("need at least 2 training points")

    @property
    def h(self) -> float:
        return float(self.p * self.c / 3.0 * self.sigma_h * self.n ** (-self.alpha))

    @classmethod
    def from_values(cls, values, c: float = 12.0, mad_scale: float = MAD_SCALE) -> "BandwidthRule":
        """Rule from training responses: (N,) for p=1, (N, 2) columns (z1, z2) for p=2."""
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 1:
            return cls(1, mad(v, mad_scale), len(v), c)
        return cls(2, 0.5 * (mad(v[:, 0], mad_scale) + mad(v[:, 1], mad_scale)), len(v), c)


def bandwidth(p: int, sigma_h: float, n: int, c: float = 12.0) -> float:
    return BandwidthRule(p, sigma_h, n, c).h


def _log_phi(x):
    return -0.5 * x * x - LOG_SQRT_2PI


class PredictiveCDF:
    """Kernel mixture for B locations.

    ``nodes`` is (n,) for a scalar response or (n, 2) with columns
    (z1_node, z2_node) for a pair. One-dimensional ``probs`` means a single
    location and every method then returns plain floats.
    """

    def __init__(self, probs, nodes, h: float):
        z = np.asarray(probs, dtype=np.float64)
        self.single = z.ndim == 1
        z = np.atleast_2d(z)
        nodes = np.asarray(nodes, dtype=np.float64)
        if nodes.ndim == 1:
            self.p = 1
        elif nodes.ndim == 2 and nodes.shape[1] == 2:
            self.p = 2
        else:
            raise DataError(f"nodes must be (n,) or (n, 2), got {nodes.shape}")
        if z.shape[1] != len(nodes):
            raise DataError(f"{z.shape[1]} probabilities per row for {len(nodes)} nodes")
        if not h > 0:
            raise DataError("bandwidth must be positive")
        if np.any(z < 0) or not np.allclose(z.sum(axis=1), 1.0, atol=1e-8):
            raise DataError("class probabilities must be nonnegative and sum to 1")
        self.probs, self.nodes, self.h = z, nodes, float(h)

    def __len__(self):
        return len(self.probs)

    @property
    def z1_nodes(self) -> np.ndarray:
        return self.nodes if self.p == 1 else self.nodes[:, 0]

    @property
    def z2_nodes(self) -> np.ndarray:
        self._need_pair()
        return self.nodes[:, 1]

    def _need_pair(self):
        if self.p != 2:
            raise DataError("operation needs a bivariate predictive distribution")

    def _out(self, v):
        return float(v[0]) if self.single and v.shape == (1,) else v

    def _col(self, y):
        # one value per location; a single location may be evaluated on a whole grid of y
        y = np.asarray(y, dtype=np.float64)
        if len(self) == 1 and y.ndim:
            return y.reshape(-1, 1)
        return np.broadcast_to(y.reshape(-1, 1) if y.ndim else y, (len(self), 1))

    # --- distribution functions -------------------------------------------

    def _weights(self, given_y2) -> np.ndarray:
        """Mixture weights for Y1, conditional on Y2 = given_y2 when supplied."""
        if given_y2 is None:
            return self.probs
        self._need_pair()
        g = self._col(given_y2)
        with np.errstate(divide="ignore"):
            logw = np.log(self.probs) + _log_phi((g - self.z2_nodes) / self.h)
        lse = logsumexp(logw, axis=1, keepdims=True)
        if np.any(lse[:, 0] - np.log(self.h) < np.log(DENSITY_FLOOR)):
            bad = np.flatnonzero(lse[:, 0] - np.log(self.h) < np.log(DENSITY_FLOOR))
            raise ConditioningError(f"marginal density of the conditioning value is below "
                                    f"{DENSITY_FLOOR} at location(s) {bad[:5].tolist()}")
        return np.exp(logw - lse)

    def _mix_cdf(self, w, y) -> np.ndarray:
        return np.sum(w * ndtr((self._col(y) - self.z1_nodes) / self.h), axis=1)

    def cdf(self, y, given_y2=None):
        """Marginal CDF of the (first) response, or conditional on Y2 = given_y2."""
        return self._out(self._mix_cdf(self._weights(given_y2), y))

    def joint_cdf(self, y1, y2):
        self._need_pair()
        t1 = ndtr((self._col(y1) - self.nodes[:, 0]) / self.h)
        t2 = ndtr((self._col(y2) - self.nodes[:, 1]) / self.h)
        return self._out(np.sum(self.probs * t1 * t2, axis=1))

    def marginal_density(self, y2):
        self._need_pair()
        d = np.exp(_log_phi((self._col(y2) - self.z2_nodes) / self.h)) / self.h
        return self._out(np.sum(self.probs * d, axis=1))

    def conditional_cdf(self, y1, given_y2):
        return self.cdf(y1, given_y2=given_y2)

    # --- inversion ---------------------------------------------------------

    def quantile(self, tau, given_y2=None, tol: float = 1e-9, expansions: int = 10):
        """tau-quantile per location by bisection; tau may be a scalar or (B,)."""
        tau = np.broadcast_to(np.asarray(tau, dtype=np.float64), (len(self),)).copy()
        if np.any(~(tau > 0) | ~(tau < 1)):
            raise QuantileError("tau must lie strictly inside (0, 1)")
        w = self._weights(given_y2)
        lo = np.full(len(self), self.z1_nodes.min() - 12.0 * self.h)
        hi = np.full(len(self), self.z1_nodes.max() + 12.0 * self.h)
        for _ in range(expansions + 1):
            flo, fhi = self._mix_cdf(w, lo), self._mix_cdf(w, hi)
            out = (flo > tau) | (fhi < tau)
            if not np.any(out):
                break
            width = hi - lo
            lo = np.where(flo > tau, lo - width, lo)
            hi = np.where(fhi < tau, hi + width, hi)
        else:
            raise QuantileError("could not bracket the quantile")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f = self._mix_cdf(w, mid)
            below = f < tau
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.spacing(np.abs(mid) + 1.0)):
                break
        q = 0.5 * (lo + hi)
        resid = np.abs(self._mix_cdf(w, q) - tau)
        if np.any(resid >= tol):
            raise QuantileError(f"bisection residual {resid.max():.3g} exceeds {tol}")
        return self._out(q)

    def quantiles(self, taus, given_y2=None) -> np.ndarray:
        """(B, len(taus)) matrix of quantiles."""
        cols = [np.atleast_1d(self.quantile(t, given_y2)) for t in taus]
        return np.column_stack(cols)

    def median(self, given_y2=None):
        return self.quantile(0.5, given_y2)

    def interval(self, alpha: float = 0.05, given_y2=None):
        if not 0 < alpha < 1:
            raise QuantileError("alpha must lie in (0, 1)")
        return self.quantile(alpha / 2, given_y2), self.quantile(1 - alpha / 2, given_y2)

    def exceedance(self, threshold, given_y2=None):
        return self._out(1.0 - self._mix_cdf(self._weights(given_y2), threshold))

    # --- sampling ------------------------------------------------------------

    def sample(self, m: int, seed=None) -> np.ndarray:
        """(B, m) draws for p=1 or (B, m, 2) pairs (columns z1, z2) for p=2."""
        if m < 1:
            raise DataError("need at least one sample")
        rng = as_generator(seed)
        cum = np.cumsum(self.probs, axis=1)
        cum[:, -1] = 1.0
        u = rng.random((len(self), m))
        comp = np.empty((len(self), m), dtype=np.int64)
        for b in range(len(self)):
            comp[b] = np.searchsorted(cum[b], u[b], side="right")
        comp = np.minimum(comp, len(self.nodes) - 1)
        centre = self.nodes[comp]
        out = centre + self.h * rng.standard_normal(centre.shape)
        return out[0] if self.single else out


def sample_joint(pred: PredictiveCDF, m: int, seed=None) -> np.ndarray:
    return pred.sample(m, seed)


def subset(pred: PredictiveCDF, index) -> PredictiveCDF:
    return PredictiveCDF(pred.probs[index], pred.nodes, pred.h)


def cdf_univariate(pred: PredictiveCDF, y):
    return pred.cdf(y)


def joint_cdf(pred: PredictiveCDF, y1, y2):
    return pred.joint_cdf(y1, y2)


def marginal_density(pred: PredictiveCDF, y2):
    return pred.marginal_density(y2)


def conditional_cdf(pred: PredictiveCDF, y1, given_y2):
    return pred.conditional_cdf(y1, given_y2)


def quantile(pred: PredictiveCDF, tau, given_y2: Optional[np.ndarray] = None):
    return pred.quantile(tau, given_y2)


def interval(pred: PredictiveCDF, alpha: float = 0.05, given_y2=None):
    return pred.interval(alpha, given_y2)


def exceedance(pred: PredictiveCDF, threshold, given_y2=None):
    return pred.exceedance(threshold, given_y2)
