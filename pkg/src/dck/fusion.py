"""Fusing non-collocated bivariate observations into one collocated training set.

Steps: kappa-NN collocation of every Z1 site with Z2 (set U), linear quantile
regression of Z1 on Z2 at ``m1`` levels, orthogonal projection of U onto the
nearest line (V1), and soft nearest-neighbour augmentation of the Z2-only
sites (V2).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .core import BiSampleSets, DataError, DCKError, UniDataset, as_locations

log = logging.getLogger(__name__)

STUDY_TAUS = (0.05, 0.275, 0.5, 0.725, 0.95)
NN_NORMS = ("mean_abs", "min", "median")


class QuantileFitError(DCKError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    m1: int = 5
    taus: Optional[tuple] = None
    kappa: int = 1
    kappa2: int = 5
    epsilon: float = 1e-8
    nn_norm: str = "mean_abs"

    def __post_init__(self):
        taus = self.taus
        if taus is None:
            taus = tuple(np.linspace(0.05, 0.95, self.m1)) if self.m1 > 1 else (0.5,)
        taus = tuple(float(t) for t in taus)
        if len(taus) != self.m1:
            raise DataError(f"m1={self.m1} but {len(taus)} quantile levels given")
        if not all(0 < t < 1 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
            raise DataError("quantile levels must be strictly increasing inside (0, 1)")
        if self.kappa < 1 or self.kappa2 < 1:
            raise DataError("kappa and kappa2 must be at least 1")
        if not self.epsilon > 0:
            raise DataError("epsilon must be positive")
        if self.nn_norm not in NN_NORMS:
            raise DataError(f"nn_norm must be one of {NN_NORMS}")
        object.__setattr__(self, "taus", taus)


@dataclass(frozen=True)
class QuantileLine:
    tau: float
    a: float
    b: float

    def __call__(self, z2):
        return self.a + self.b * np.asarray(z2)


@dataclass(frozen=True)
class FusedPoint:
    """One member of V; ``line_index`` is 1-based."""

    z1: float
    z2: float
    location: tuple
    source: str
    line_index: int


# --------------------------------------------------------------------------
# neighbours

def nearest_neighbors(query, reference, k: int, chunk: int = 512) -> np.ndarray:
    """Indices of the ``k`` nearest reference points per query row.

    Exact Euclidean distances; equal distances are ordered by reference index.
    """
    q, r = as_locations(query), as_locations(reference)
    if len(r) < k:
        raise DataError(f"need at least {k} reference points, got {len(r)}")
    out = np.empty((len(q), k), dtype=np.int64)
    for start in range(0, len(q), chunk):
        qs = q[start:start + chunk]
        d = (qs[:, None, 0] - r[None, :, 0]) ** 2 + (qs[:, None, 1] - r[None, :, 1]) ** 2
        if k < r.shape[0]:
            kth = np.partition(d, k - 1, axis=1)[:, k - 1]
        else:
            kth = d.max(axis=1)
        for i in range(len(qs)):
            cand = np.flatnonzero(d[i] <= kth[i])
            out[start + i] = cand[np.argsort(d[i, cand], kind="stable")[:k]]
    return out


# --------------------------------------------------------------------------
# step 1: collocation

@dataclass(frozen=True)
class CollocatedSet:
    """Set U: every Z1 site paired with the mean Z2 of its kappa nearest Z2 sites."""

    z1: np.ndarray
    z2bar: np.ndarray
    locations: np.ndarray     # S1
    neighbors: np.ndarray     # (N1, kappa) indices into S2, nearest first

    def __len__(self):
        return len(self.z1)

    @property
    def matched(self) -> np.ndarray:
        return self.neighbors[:, 0]


def collocate(data: BiSampleSets, kappa: int = 1) -> CollocatedSet:
    if data.n1 < 1 or data.n2 < 1:
        raise DataError("collocation needs nonempty Z1 and Z2 sets")
    nn = nearest_neighbors(data.set1.locations, data.set2.locations, kappa)
    z2bar = data.set2.values[nn].mean(axis=1)
    return CollocatedSet(data.set1.values.copy(), z2bar, data.set1.locations.copy(), nn)


# --------------------------------------------------------------------------
# step 2: quantile regression lines

def pinball_loss(residuals, tau: float) -> float:
    r = np.asarray(residuals, dtype=np.float64)
    return float(np.sum(r * (tau - (r < 0))))


def _irls(x, y, tau, smoothing, tol, max_iter):
    # MM iterations on the smoothed check loss (Hunter & Lange majorizer)
    design = np.column_stack([np.ones_like(x), x])
    beta = np.linalg.lstsq(design, y, rcond=None)[0]
    shift = (2 * tau - 1) * design.sum(axis=0)
    for _ in range(max_iter):
        w = 1.0 / (smoothing + np.abs(y - design @ beta))
        new = np.linalg.solve(design.T @ (w[:, None] * design), design.T @ (w * y) + shift)
        done = np.max(np.abs(new - beta)) < tol * (1 + np.max(np.abs(beta)))
        beta = new
        if done:
            break
    return beta


def _best_line_through(x, y, tau, pivot):
    """Exact minimizer among lines through data point ``pivot`` (a weighted quantile of slopes)."""
    c = x - x[pivot]
    m = np.flatnonzero(c != 0)
    slopes = (y[m] - y[pivot]) / c[m]
    w = np.abs(c[m])
    level = np.where(c[m] > 0, tau, 1 - tau)
    order = np.argsort(slopes, kind="stable")
    k = min(int(np.searchsorted(np.cumsum(w[order]), np.sum(w * level))), len(order) - 1)
    b = slopes[order[k]]
    return y[pivot] - b * x[pivot], b, int(m[order[k]])


def fit_quantile_line(z2, z1, tau: float, smoothing: float = 1e-6, tol: float = 1e-8,
                      max_iter: int = 200, max_pivots: int = 10_000) -> QuantileLine:
    """Linear tau-quantile regression of ``z1`` on ``z2``.

    A smoothed-check-loss IRLS gives a warm start; pivoting between the data
    points the line interpolates then lands on an exact minimizer of the
    pinball loss.
    """
    x = np.asarray(z2, dtype=np.float64)
    y = np.asarray(z1, dtype=np.float64)
    if len(x) != len(y):
        raise DataError("z2 and z1 differ in length")
    if len(x) < 3:
        raise DataError("quantile regression needs at least 3 pairs")
    if np.all(x == x[0]):
        raise QuantileFitError("degenerate predictor: all z2 values are equal")
    if not 0 < tau < 1:
        raise DataError("tau must lie in (0, 1)")
    a, b = _irls(x, y, tau, smoothing, tol, max_iter)
    best = pinball_loss(y - a - b * x, tau)
    pivot = int(np.argmin(np.abs(y - a - b * x)))
    for _ in range(max_pivots):
        na, nb, partner = _best_line_through(x, y, tau, pivot)
        loss = pinball_loss(y - na - nb * x, tau)
        if loss < best - 1e-14 * abs(best):
            a, b, best, pivot = na, nb, loss, partner
            continue
        # no gain rotating about this point; try the other point on the line
        r = np.abs(y - a - b * x)
        r[pivot] = np.inf
        other = int(np.argmin(r))
        na, nb, partner = _best_line_through(x, y, tau, other)
        loss = pinball_loss(y - na - nb * x, tau)
        if loss < best - 1e-14 * abs(best):
            a, b, best, pivot = na, nb, loss, partner
            continue
        return QuantileLine(float(tau), float(a), float(b))
    raise QuantileFitError(f"quantile fit at tau={tau} did not converge in {max_pivots} pivots")


def fit_lines(u: CollocatedSet, taus: Sequence[float]) -> tuple:
    lines = tuple(fit_quantile_line(u.z2bar, u.z1, t) for t in taus)
    mid = float(np.mean(u.z2bar))
    at_mean = [ln(mid) for ln in lines]
    if any(b < a for a, b in zip(at_mean, at_mean[1:])):
        log.warning("quantile lines cross at the mean of z2: %s", at_mean)
    return lines


# --------------------------------------------------------------------------
# steps 3 and 4

def nearest_line(z2, z1, lines) -> np.ndarray:
    """Index of the line with the smallest vertical residual; ties go to the lower index."""
    a = np.array([ln.a for ln in lines])
    b = np.array([ln.b for ln in lines])
    resid = np.abs(np.asarray(z1)[:, None] - a[None, :] - b[None, :] * np.asarray(z2)[:, None])
    return np.argmin(resid, axis=1)


def orthogonal_projection(z2, z1, a, b):
    """Foot of the perpendicular from (z2, z1) onto z1 = a + b z2; returns (z2', z1')."""
    z2p = (np.asarray(z2) + b * (np.asarray(z1) - a)) / (1.0 + b * b)
    return z2p, a + b * z2p


def project_to_lines(z2, z1, lines):
    """Project points onto their nearest line; returns (z2', z1', k)."""
    if not len(lines):
        raise DataError("no quantile lines to project onto")
    z2 = np.atleast_1d(np.asarray(z2, dtype=np.float64))
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.float64))
    k = nearest_line(z2, z1, lines)
    a = np.array([ln.a for ln in lines])[k]
    b = np.array([ln.b for ln in lines])[k]
    z2p, z1p = orthogonal_projection(z2, z1, a, b)
    return z2p, z1p, k


def soft_weights(q, neighbors_z1, epsilon: float, nn_norm: str = "mean_abs"):
    """Soft probabilities over candidate values ``q`` (m1,) given neighbouring Z1 values.

    Returns (p, k_star).
    """
    q = np.asarray(q, dtype=np.float64)
    dev = np.abs(np.asarray(neighbors_z1, dtype=np.float64)[None, :] - q[:, None])
    score = {"mean_abs": dev.mean, "min": dev.min, "median": lambda axis: np.median(dev, axis=axis)}[nn_norm](axis=1)
    k_star = int(np.argmin(score))
    r = np.abs(q - q[k_star])
    logits = -r / (np.median(r) + epsilon)
    p = np.exp(logits - logits.max())
    return p / p.sum(), k_star


def augment(z2_only: UniDataset, lines, z1_train: UniDataset, kappa2: int = 5,
            epsilon: float = 1e-8, nn_norm: str = "mean_abs"):
    """Expected Z1 at Z2-only sites; returns (z1_exp, k_star, p) with p of shape (M, m1)."""
    if len(z1_train) < kappa2:
        raise DataError(f"augmentation needs at least kappa2={kappa2} Z1 observations")
    m = len(z2_only)
    a = np.array([ln.a for ln in lines])
    b = np.array([ln.b for ln in lines])
    probs = np.empty((m, len(lines)))
    kstar = np.empty(m, dtype=np.int64)
    z1exp = np.empty(m)
    if m == 0:
        return z1exp, kstar, probs
    nn = nearest_neighbors(z2_only.locations, z1_train.locations, kappa2)
    for i in range(m):
        q = a + b * z2_only.values[i]
        p, k = soft_weights(q, z1_train.values[nn[i]], epsilon, nn_norm)
        probs[i], kstar[i], z1exp[i] = p, k, p @ q
    return z1exp, kstar, probs


# --------------------------------------------------------------------------
# step 5

@dataclass(frozen=True)
class FusionResult:
    """Fused set V with its locations S (subset of S2), aligned by row.

    ``line`` is the 0-based index k* of each point's line; ``source`` is
    'projected' (V1, on its line) or 'augmented' (V2, expected value).
    """

    z1: np.ndarray
    z2: np.ndarray
    locations: np.ndarray
    source: np.ndarray
    line: np.ndarray
    lines: tuple
    collocated: CollocatedSet = field(repr=False)
    s2_index: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.z1)

    def points(self) -> Iterator[FusedPoint]:
        for i in range(len(self)):
            yield FusedPoint(float(self.z1[i]), float(self.z2[i]), tuple(self.locations[i]),
                             str(self.source[i]), int(self.line[i]) + 1)

    @property
    def projected(self) -> np.ndarray:
        return self.source == "projected"


def fuse(data: BiSampleSets, config: FusionConfig = FusionConfig()) -> FusionResult:
    if data.n1 < 3:
        raise DataError("fusion needs at least 3 Z1 observations")
    if data.n2 < data.n1:
        raise DataError(f"fusion needs N2 >= N1, got N1={data.n1}, N2={data.n2}")
    u = collocate(data, config.kappa)
    lines = fit_lines(u, config.taus)
    z2p, z1p, k = project_to_lines(u.z2bar, u.z1, lines)
    matched = u.matched
    rest = np.setdiff1d(np.arange(data.n2), matched)
    z1a, ka, _ = augment(data.set2.subset(rest), lines, data.set1, config.kappa2,
                         config.epsilon, config.nn_norm)
    n1, n2 = len(u), len(rest)
    return FusionResult(
        z1=np.concatenate([z1p, z1a]),
        z2=np.concatenate([z2p, data.set2.values[rest]]),
        locations=np.vstack([data.set2.locations[matched], data.set2.locations[rest]]),
        source=np.array(["projected"] * n1 + ["augmented"] * n2),
        line=np.concatenate([k, ka]),
        lines=lines,
        collocated=u,
        s2_index=np.concatenate([matched, rest]),
    )
