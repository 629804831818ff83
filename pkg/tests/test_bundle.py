import json

import numpy as np
import pytest

from dck.bundle import ModelBundle, dumps, load_bundle, save_bundle
from dck.classifier import init_params
from dck.core import BundleError
from dck.discretize import bivariate_partition, univariate_partition
from dck.embed import build_config
from dck.fusion import QuantileLine


def _bundle(rng, n_classes=10, p=1, n_cov=0):
    loc = rng.random((300, 2))
    emb = build_config(loc)
    if p == 1:
        part = univariate_partition(rng.normal(size=2000), n_classes)
    else:
        lines = (QuantileLine(0.25, -0.5, 1.0), QuantileLine(0.75, 0.5, 1.0))
        z2 = rng.normal(size=400)
        k = rng.integers(0, 2, 400)
        z1 = np.where(k == 0, -0.5, 0.5) + z2
        part = bivariate_partition(z2, z1, k, lines, 15)
    net = init_params([emb.n_basis + n_cov, 8, part.n], rng)
    return ModelBundle(emb, net, part, 0.3, p, {"n_covariates": n_cov, "seed": 1})


def _numbers(b: ModelBundle):
    d = b.to_dict()
    return json.dumps(d, sort_keys=True)


def test_round_trip_exact(tmp_path, rng):
    for p in (1, 2):
        b = _bundle(rng, p=p, n_cov=2 if p == 1 else 0)
        path = save_bundle(b, tmp_path / f"b{p}.json")
        back = load_bundle(path)
        assert _numbers(back) == _numbers(b)
        for w0, w1 in zip(b.network.weights, back.network.weights):
            np.testing.assert_array_equal(w0, w1)
        np.testing.assert_array_equal(back.partition.nodes, b.partition.nodes)
        assert back.bandwidth_h == b.bandwidth_h
        assert set(json.loads(path.read_text())) >= {"embedding", "network", "partition", "bandwidth_h",
                                                     "p", "meta"}


def test_partition_length_132(tmp_path, rng):
    b = _bundle(rng, n_classes=132)
    d = json.loads(save_bundle(b, tmp_path / "b.json").read_text())
    assert len(d["partition"]["classes"]) == 132


def test_refuses_overwrite_and_bad_directory(tmp_path, rng):
    b = _bundle(rng)
    save_bundle(b, tmp_path / "b.json")
    with pytest.raises(BundleError, match="exists"):
        save_bundle(b, tmp_path / "b.json")
    save_bundle(b, tmp_path / "b.json", force=True)
    with pytest.raises(OSError):
        save_bundle(b, tmp_path / "missing" / "b.json")


def test_load_rejects_invalid(tmp_path, rng):
    d = _bundle(rng).to_dict()
    bad = dict(d, bandwidth_h=-1.0)
    (tmp_path / "neg.json").write_text(json.dumps(bad))
    with pytest.raises(BundleError, match="bandwidth"):
        load_bundle(tmp_path / "neg.json")
    text = dumps(_bundle(rng))
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(BundleError, match="cannot read"):
        load_bundle(tmp_path / "cut.json")
    missing = {k: v for k, v in d.items() if k != "network"}
    (tmp_path / "miss.json").write_text(json.dumps(missing))
    with pytest.raises(BundleError, match="lacks"):
        load_bundle(tmp_path / "miss.json")


def test_width_invariants(rng):
    b = _bundle(rng, n_classes=10)
    with pytest.raises(BundleError, match="outputs"):
        ModelBundle(b.embedding, init_params([b.embedding.n_basis, 4, 9], rng), b.partition, 0.3, 1)
    with pytest.raises(BundleError, match="input width"):
        ModelBundle(b.embedding, b.network, b.partition, 0.3, 1, {"n_covariates": 3})
    with pytest.raises(BundleError, match="response dimension"):
        ModelBundle(b.embedding, b.network, b.partition, 0.3, 2)


def test_predictive_from_bundle(rng):
    b = _bundle(rng, p=2)
    pred = b.predictive(rng.random((5, 2)))
    assert len(pred) == 5 and pred.p == 2
    np.testing.assert_allclose(pred.probs.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(BundleError, match="covariates"):
        _bundle(rng, n_cov=2).features(rng.random((3, 2)))
