import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dck.core import ConfigError, DataError
from dck.embed import EmbeddingConfig, basis, build_config, embed, wendland


def test_wendland_values():
    assert wendland(0.0) == pytest.approx(1.0)
    assert wendland(1.0) == 0.0
    assert wendland(1.7) == 0.0
    # (0.5^6 / 3) * (35/4 + 9 + 3)
    assert wendland(0.5) == pytest.approx(0.5**6 / 3 * (35 * 0.25 + 18 * 0.5 + 3), rel=1e-15)
    assert wendland(0.5) == pytest.approx(0.1080729, abs=1e-7)


def test_default_layout_and_spacing():
    cfg = build_config([[0, 0], [1, 1], [0.3, 0.8]])
    assert cfg.grids == (5, 9, 17)
    assert cfg.n_basis == 395
    assert cfg.bbox == pytest.approx((-0.05, -0.05, 1.05, 1.05))
    assert cfg.etas[0] == pytest.approx(2.5 * 1.1 / 4)
    assert cfg.etas[0] == pytest.approx(0.6875)


def test_even_or_tiny_grids_rejected():
    with pytest.raises(ConfigError):
        EmbeddingConfig((2,), (0.5,), (0, 0, 1, 1))
    with pytest.raises(ConfigError):
        EmbeddingConfig((4,), (0.5,), (0, 0, 1, 1))


def test_degenerate_box():
    with pytest.raises(DataError):
        build_config([[0, 0], [1, 0]])
    with pytest.raises(DataError):
        build_config([[0.5, 0.5], [0.5, 0.5]])


def test_knot_hit_and_compact_support():
    cfg = build_config([[0, 0], [1, 1]], levels=1)
    knots = cfg.knots(0)
    phi = basis(knots[7], cfg)[0]
    assert phi[7] == 1.0
    far = basis([[50.0, 50.0]], cfg)
    assert np.all(far == 0)


def test_covariates_appended_and_deterministic(rng):
    loc = rng.random((20, 2))
    cov = rng.standard_normal((20, 3))
    cfg = build_config(loc)
    x = embed(loc, cov, cfg)
    assert x.shape == (20, cfg.n_basis + 3)
    assert np.array_equal(x[:, -3:], cov)
    assert embed(loc, cov, cfg).tobytes() == x.tobytes()
    again = EmbeddingConfig.from_dict(cfg.to_dict())
    assert embed(loc, cov, again).tobytes() == x.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_range_and_lipschitz(x, y, dx, dy):
    cfg = build_config([[0, 0], [1, 1]])
    step = 1e-4 * np.array([dx, dy])
    a = basis([[x, y]], cfg)[0]
    b = basis([[x, y] + step], cfg)[0]
    assert np.all((a >= 0) & (a <= 1))
    assert np.max(np.abs(a - b)) <= 3.5 * np.linalg.norm(step) / min(cfg.etas) + 1e-15
