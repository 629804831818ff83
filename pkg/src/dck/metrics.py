"""Point, interval and multivariate scores plus replicate aggregation.

``mae`` is a mean of absolute errors (the tables call it median absolute
error, but the defining formula averages).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DataError

METRIC_KEYS = ("mae", "picp", "al", "es", "vs")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DataError("empty input")
    return a, b


def mae(predicted, truths) -> float:
    p, t = _pair(predicted, truths)
    return float(np.mean(np.abs(p - t)))


def picp_al(lowers, uppers, truths):
    """(coverage of closed intervals [L, U], mean length)."""
    lo, hi = _pair(lowers, uppers)
    t = np.asarray(truths, dtype=np.float64)
    if t.shape != lo.shape:
        raise DataError(f"shape mismatch {lo.shape} vs {t.shape}")
    if np.any(lo > hi):
        raise DataError("lower bound above upper bound")
    inside = (t >= lo) & (t <= hi)
    with np.errstate(invalid="ignore"):
        al = float(np.mean(hi - lo))
    return float(np.mean(inside)), al


def energy_score(samples, observations) -> float:
    """Mean energy score; ``samples`` (B, M, d), ``observations`` (B, d)."""
    s = np.asarray(samples, dtype=np.float64)
    z = np.asarray(observations, dtype=np.float64)
    if s.ndim == 2:
        s = s[None]
    if z.ndim == 1:
        z = z[None]
    if s.shape[1] == 0 or s.size == 0:
        raise DataError("empty samples")
    if s.shape[0] != z.shape[0] or s.shape[2] != z.shape[1]:
        raise DataError(f"samples {s.shape} do not match observations {z.shape}")
    m = s.shape[1]
    scores = np.empty(len(s))
    for b in range(len(s)):
        first = np.linalg.norm(s[b] - z[b], axis=1).mean()
        diff = s[b][:, None, :] - s[b][None, :, :]
        second = np.sqrt(np.sum(diff * diff, axis=-1)).sum() / (2.0 * m * m)
        scores[b] = first - second
    return float(scores.mean())


def variogram_score(samples, observations, beta: float = 0.5) -> float:
    """Mean bivariate variogram score of order ``beta``."""
    s = np.asarray(samples, dtype=np.float64)
    z = np.asarray(observations, dtype=np.float64)
    if s.ndim == 2:
        s = s[None]
    if z.ndim == 1:
        z = z[None]
    if s.shape[-1] != 2 or z.shape[-1] != 2:
        raise DataError("variogram score needs pairs (p = 2)")
    if s.shape[1] == 0:
        raise DataError("empty samples")
    if s.shape[0] != z.shape[0]:
        raise DataError(f"samples {s.shape} do not match observations {z.shape}")
    obs = np.abs(z[:, 0] - z[:, 1]) ** beta
    fc = np.mean(np.abs(s[:, :, 0] - s[:, :, 1]) ** beta, axis=1)
    return float(np.mean((obs - fc) ** 2))


def pit(pred, observations, given_y2=None) -> np.ndarray:
    """Probability integral transform u_i = F_i(Z_i)."""
    u = np.atleast_1d(pred.cdf(observations, given_y2=given_y2))
    return np.clip(u, 0.0, 1.0)


def relative_se(values) -> float:
    """Standard error of the mean as a percentage of the mean; NaN when R < 2."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if len(v) < 2:
        return math.nan
    mean = v.mean()
    if mean == 0:
        return math.nan
    return float(100.0 * v.std(ddof=1) / np.sqrt(len(v)) / abs(mean))


@dataclass
class ResultTable:
    """Per-replicate metric rows for one or more methods."""

    rows: list = field(default_factory=list)   # dicts with method, replicate, metrics, seconds

    def add(self, method: str, replicate: int, metrics: dict, seconds: float = math.nan):
        row = {"method": method, "replicate": int(replicate), "seconds": float(seconds)}
        for k, v in metrics.items():
            row[k] = float(v)
        self.rows.append(row)

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            if r["method"] not in seen:
                seen.append(r["method"])
        return seen

    def summary(self) -> list:
        """Aggregate row per method: means, relative SEs (percent) and mean seconds."""
        out = []
        for method in self.methods():
            rows = sorted((r for r in self.rows if r["method"] == method), key=lambda r: r["replicate"])
            agg = {"method": method, "replicates": len(rows)}
            for k in METRIC_KEYS:
                vals = [r[k] for r in rows if k in r]
                if not vals:
                    continue
                agg[k] = float(np.mean(vals))
                agg[k + "_se_pct"] = relative_se(vals)
            agg["seconds"] = float(np.mean([r["seconds"] for r in rows]))
            out.append(agg)
        return out

    def replicate_csv(self) -> str:
        keys = ["method", "replicate"] + [k for k in METRIC_KEYS if any(k in r for r in self.rows)] + ["seconds"]
        lines = [",".join(keys)]
        for r in self.rows:
            lines.append(",".join(_fmt(r.get(k, "")) for k in keys))
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        summ = self.summary()
        present = [k for k in METRIC_KEYS if any(k in s for s in summ)]
        keys = ["method", "replicates"] + [c for k in present for c in (k, k + "_se_pct")] + ["seconds"]
        lines = [",".join(keys)]
        for s in summ:
            lines.append(",".join(_fmt(s.get(k, "")) for k in keys))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6g}"
    return str(v)
