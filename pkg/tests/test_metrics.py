import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dck.cdf import PredictiveCDF
from dck.core import DataError
from dck.metrics import (ResultTable, energy_score, mae, picp_al, pit, relative_se,
                         variogram_score)


def test_mae():
    assert mae([1.0, 2.0], [1.0, 2.0]) == 0
    assert mae([0.0, 0.0], [1.0, -3.0]) == 2.0
    with pytest.raises(DataError):
        mae([1.0], [1.0, 2.0])


def test_picp_al():
    assert picp_al([-np.inf] * 3, [np.inf] * 3, [0.0, 5.0, -2.0])[0] == 1.0
    assert picp_al([0.0], [2.0], [2.0]) == (1.0, 2.0)
    assert picp_al([0.0] * 4, [2.0] * 4, [1.0, 3.0, 0.5, -1.0]) == (0.5, 2.0)
    with pytest.raises(DataError):
        picp_al([1.0], [0.0], [0.5])


def test_energy_score_hand_values():
    assert energy_score([[[1.0, 2.0]]], [[1.0, 2.0]]) == 0
    assert energy_score(np.ones((2, 5, 2)), np.ones((2, 2))) == 0
    assert energy_score([[[0.0, 0.0], [2.0, 0.0]]], [[1.0, 0.0]]) == pytest.approx(0.5)
    with pytest.raises(DataError):
        energy_score(np.zeros((1, 0, 2)), np.zeros((1, 2)))


def test_variogram_score_hand_values():
    assert variogram_score([[[2.0, 2.0]]], [[3.0, 1.0]]) == pytest.approx(2.0)
    assert variogram_score([[[3.0, 1.0], [1.0, 3.0]]], [[0.0, 2.0]]) == pytest.approx(0.0)
    assert variogram_score([[[2.0, 2.0]]], [[5.0, 1.0]]) == pytest.approx(4.0)
    with pytest.raises(DataError):
        variogram_score(np.zeros((1, 3, 3)), np.zeros((1, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_permutation_invariance_and_nonnegativity(seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((6, 7, 2))
    z = rng.standard_normal((6, 2))
    perm = rng.permutation(6)
    es = energy_score(s, z)
    assert es >= 0
    assert es == pytest.approx(energy_score(s[perm], z[perm]), rel=1e-12)
    assert variogram_score(s, z) == pytest.approx(variogram_score(s[perm], z[perm]), rel=1e-12)
    a, b = rng.standard_normal(6), rng.standard_normal(6)
    assert mae(a, b) == pytest.approx(mae(a[perm], b[perm]), rel=1e-15)


def test_pit_self_consistency():
    pred = PredictiveCDF([0.3, 0.7], [-1.0, 2.0], 0.6)
    assert pit(pred, pred.median())[0] == pytest.approx(0.5, abs=1e-9)
    draws = pred.sample(10_000, 11)
    u = pit(pred, draws)
    assert np.all((u >= 0) & (u <= 1))
    assert stats.kstest(u, "uniform").statistic < 0.02


def test_interval_calibration_on_self_drawn_data():
    rng = np.random.default_rng(4)
    probs = rng.dirichlet(np.ones(5), size=10_000)
    pred = PredictiveCDF(probs, np.array([-2.0, -0.5, 0.0, 1.0, 3.0]), 0.5)
    comp = (probs.cumsum(axis=1) > rng.random((len(probs), 1))).argmax(axis=1)
    y = pred.nodes[comp] + 0.5 * rng.standard_normal(len(probs))
    lo, hi = pred.interval(0.05)
    cover, _ = picp_al(lo, hi, y)
    assert abs(cover - 0.95) <= 0.01


def test_relative_se_and_table():
    assert math.isnan(relative_se([1.0]))
    assert relative_se([1.0, 3.0]) == pytest.approx(100 * np.std([1, 3], ddof=1) / np.sqrt(2) / 2)
    t = ResultTable()
    t.add("DCK", 0, {"mae": 0.2, "picp": 0.9, "al": 1.0}, 1.5)
    s = t.summary()[0]
    assert s["mae"] == 0.2 and math.isnan(s["mae_se_pct"])
    line = t.summary_csv().splitlines()[1].split(",")
    header = t.summary_csv().splitlines()[0].split(",")
    assert line[header.index("mae_se_pct")] == ""
    t.add("DCK", 1, {"mae": 0.4, "picp": 1.0, "al": 2.0}, 2.5)
    assert t.summary()[0]["mae"] == pytest.approx(0.3)
    assert t.replicate_csv().count("\n") == 3
