"""Indicator classes for continuous responses.

Univariate: ``n - 1`` interior cuts at empirical quantiles whose levels are the
interior points of an even grid of ``n + 1`` levels on [0.01, 0.99]; class j is
(q_{j-1}, q_j] with open ends. Bivariate: points assigned to quantile line k
are ordered by their arc-length coordinate along the line and split into runs
of ``delta`` (the remainder joins the last run); nodes are run midpoints.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DCKError
from .fusion import QuantileLine, nearest_line

log = logging.getLogger(__name__)


class PartitionError(DCKError):
    pass


def quantile_levels(n: int, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    return np.linspace(lo, hi, n + 1)[1:-1]


def along_line(z2, z1, a: float, b: float) -> np.ndarray:
    """Signed arc length from the line's crossing of z2 = 0 to the foot of (z2, z1)."""
    return (np.asarray(z2) + b * (np.asarray(z1) - a)) / np.sqrt(1.0 + b * b)


@dataclass(frozen=True)
class ClassPartition:
    """The n indicator classes.

    p = 1: ``cuts`` has n - 1 increasing interior thresholds, ``nodes`` (n,).
    p = 2: class j lives on line ``class_line[j]`` over the along-line interval
    (``t_lo[j]``, ``t_hi[j]``] (infinite at the ends of each line) and
    ``nodes`` is (n, 2) holding (z1_node, z2_node).
    """

    p: int
    nodes: np.ndarray
    counts: np.ndarray
    cuts: Optional[np.ndarray] = None
    lines: tuple = ()
    class_line: Optional[np.ndarray] = None
    t_lo: Optional[np.ndarray] = None
    t_hi: Optional[np.ndarray] = None
    delta: int = 1

    @property
    def n(self) -> int:
        return len(self.counts)

    def line_classes(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.class_line == k)

    def to_list(self) -> list:
        fin = lambda v: None if not np.isfinite(v) else float(v)
        if self.p == 1:
            lo = np.concatenate([[-np.inf], self.cuts])
            hi = np.concatenate([self.cuts, [np.inf]])
            return [{"q_lo": fin(lo[j]), "q_hi": fin(hi[j]), "node": float(self.nodes[j]),
                     "count": int(self.counts[j])} for j in range(self.n)]
        return [{"k": int(self.class_line[j]) + 1, "t_lo": fin(self.t_lo[j]), "t_hi": fin(self.t_hi[j]),
                 "z1_node": float(self.nodes[j, 0]), "z2_node": float(self.nodes[j, 1]),
                 "count": int(self.counts[j])} for j in range(self.n)]

    def to_dict(self) -> dict:
        d = {"p": self.p, "classes": self.to_list(), "delta": self.delta}
        if self.p == 2:
            d["lines"] = [{"tau": ln.tau, "a": ln.a, "b": ln.b} for ln in self.lines]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassPartition":
        classes = d["classes"]
        val = lambda v, default: default if v is None else float(v)
        counts = np.array([c["count"] for c in classes], dtype=np.int64)
        if d["p"] == 1:
            cuts = np.array([val(c["q_hi"], np.inf) for c in classes[:-1]])
            nodes = np.array([c["node"] for c in classes], dtype=np.float64)
            return cls(1, nodes, counts, cuts=cuts, delta=d.get("delta", 1))
        lines = tuple(QuantileLine(ln["tau"], ln["a"], ln["b"]) for ln in d["lines"])
        return cls(2, np.array([[c["z1_node"], c["z2_node"]] for c in classes], dtype=np.float64),
                   counts, lines=lines,
                   class_line=np.array([c["k"] for c in classes], dtype=np.int64) - 1,
                   t_lo=np.array([val(c["t_lo"], -np.inf) for c in classes]),
                   t_hi=np.array([val(c["t_hi"], np.inf) for c in classes]),
                   delta=d.get("delta", 1))


def univariate_partition(values, n: int) -> ClassPartition:
    v = np.asarray(values, dtype=np.float64)
    if n < 2:
        raise PartitionError("need at least 2 classes")
    if len(v) < n:
        raise PartitionError(f"{len(v)} values cannot fill {n} classes")
    cuts = np.quantile(v, quantile_levels(n))
    if np.any(np.diff(cuts) <= 0):
        raise PartitionError(f"empirical quantiles coincide; too few distinct values for n={n}, "
                             "use a smaller number of classes")
    labels = np.searchsorted(cuts, v, side="left")
    counts = np.bincount(labels, minlength=n)
    if np.any(counts == 0):
        raise PartitionError(f"empty class for n={n}; use a smaller number of classes")
    nodes = np.array([np.median(v[labels == j]) for j in range(n)])
    return ClassPartition(1, nodes, counts, cuts=cuts)


def bivariate_partition(z2, z1, line_index, lines, delta: int) -> ClassPartition:
    """Split each line's points into runs of at least ``delta`` along the line.

    Points need not lie on their line (augmented points); they are ordered by
    the foot of their perpendicular and nodes are built from those feet, so
    every node lies on its line.
    """
    z2 = np.asarray(z2, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    line_index = np.asarray(line_index)
    if delta < 1:
        raise PartitionError("delta must be at least 1")
    nodes, counts, cls_line, t_lo, t_hi = [], [], [], [], []
    for k, ln in enumerate(lines):
        idx = np.flatnonzero(line_index == k)
        if len(idx) < delta:
            raise PartitionError(f"line {k} (tau={ln.tau}) has {len(idx)} points, fewer than delta={delta}")
        t = along_line(z2[idx], z1[idx], ln.a, ln.b)
        ts = np.sort(t, kind="stable")
        m2 = len(idx) // delta
        # run c covers sorted positions [c*delta, (c+1)*delta), last run takes the remainder
        bounds = [c * delta for c in range(m2)] + [len(idx)]
        cuts = [0.5 * (ts[bounds[c] - 1] + ts[bounds[c]]) for c in range(1, m2)]
        lo = np.array([-np.inf] + cuts)
        hi = np.array(cuts + [np.inf])
        member = np.searchsorted(np.array(cuts), t, side="left")
        for c in range(m2):
            tc = t[member == c]
            if not len(tc):
                raise PartitionError(f"tied along-line coordinates emptied a class on line {k}")
            z2n, z1n = _point_at(0.5 * (tc.min() + tc.max()), ln)
            nodes.append((z1n, z2n))
            counts.append(len(tc))
            cls_line.append(k)
            t_lo.append(lo[c])
            t_hi.append(hi[c])
    return ClassPartition(2, np.array(nodes), np.array(counts, dtype=np.int64), lines=tuple(lines),
                          class_line=np.array(cls_line, dtype=np.int64), t_lo=np.array(t_lo),
                          t_hi=np.array(t_hi), delta=int(delta))


def _point_at(t, ln: QuantileLine):
    """(z2, z1) on the line at arc length ``t``."""
    z2 = t / np.sqrt(1.0 + ln.b * ln.b)
    return z2, ln.a + ln.b * z2


@dataclass(frozen=True)
class LabeledDataset:
    locations: np.ndarray
    covariates: Optional[np.ndarray]
    labels: np.ndarray
    n_classes: int
    clamped: Optional[np.ndarray] = None

    def one_hot(self) -> np.ndarray:
        out = np.zeros((len(self.labels), self.n_classes))
        out[np.arange(len(self.labels)), self.labels] = 1.0
        return out


def label_values(partition: ClassPartition, values=None, z2=None, z1=None, line_index=None):
    """Class label per row; returns (labels, clamped_mask).

    Univariate rows use ``values``. Bivariate rows use (z2, z1) and, when
    given, their known line index; otherwise the nearest line by vertical
    residual is used.
    """
    if partition.p == 1:
        v = np.asarray(values, dtype=np.float64)
        return np.searchsorted(partition.cuts, v, side="left"), np.zeros(len(v), bool)
    z2 = np.asarray(z2, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    k = nearest_line(z2, z1, partition.lines) if line_index is None else np.asarray(line_index)
    labels = np.empty(len(z2), dtype=np.int64)
    clamped = np.zeros(len(z2), bool)
    for line_k, ln in enumerate(partition.lines):
        rows = np.flatnonzero(k == line_k)
        if not len(rows):
            continue
        classes = partition.line_classes(line_k)
        if not len(classes):
            raise PartitionError(f"no classes on line {line_k}")
        t = along_line(z2[rows], z1[rows], ln.a, ln.b)
        inner = partition.t_hi[classes][:-1]
        labels[rows] = classes[np.searchsorted(inner, t, side="left")]
    bad = (k < 0) | (k >= len(partition.lines))
    if np.any(bad):
        raise PartitionError("line index outside the partition's lines")
    return labels, clamped


def assign_labels(partition: ClassPartition, locations, values=None, covariates=None,
                  z2=None, z1=None, line_index=None) -> LabeledDataset:
    labels, clamped = label_values(partition, values, z2, z1, line_index)
    if np.any(clamped):
        log.warning("%d rows fell outside every class and were clamped", int(clamped.sum()))
    return LabeledDataset(np.asarray(locations, dtype=np.float64), covariates, labels,
                          partition.n, clamped)
