import math

import numpy as np
import pytest

from idebench import datagen as dg
from idebench.baseline import (BaselineConfig, BaselineSelector, ClipToyModel, ConfigError,
                               cosine_score, encode_features, encode_text, info_nce,
                               select_baseline, train_baseline)
from idebench.gradcore import grad_check, l2_normalize, make_rng, tensor
from idebench.ide import Vocab, VocabError


@pytest.fixture(scope="module")
def toy_train():
    split = dg.apply_leave_out(dg.gen_toy(make_rng(0, "toy"), 40), dg.TOY_HOLDOUT)
    return split.train


@pytest.fixture(scope="module")
def trained(toy_train):
    return train_baseline(toy_train, BaselineConfig(epochs=30, seed=0), Vocab(dg.TOY_VOCAB))


def _fresh(seed=0):
    return ClipToyModel(Vocab(dg.TOY_VOCAB), 5, BaselineConfig(seed=seed))


def test_encodings_are_unit_norm():
    m = _fresh()
    u = encode_features(m, [1, 0, 0, 1, 0])
    v = encode_text(m, ["red", "metal", "ball"])
    assert u.shape == v.shape == (16,)
    assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)


def test_text_encoding_order_sensitive_and_deterministic():
    m = _fresh(1)
    a = encode_text(m, ["red", "metal", "ball"])
    assert not np.allclose(a, encode_text(m, ["ball", "metal", "red"]))
    assert a.tobytes() == encode_text(m, ["red", "metal", "ball"]).tobytes()


def test_text_batch_masking_matches_single():
    m = _fresh(2)
    batch = m.text_forward([["red", "ball"], ["blue", "metal", "triangle"]]).data
    np.testing.assert_allclose(batch[0], encode_text(m, ["red", "ball"]), atol=1e-14)
    np.testing.assert_allclose(batch[1], encode_text(m, ["blue", "metal", "triangle"]),
                               atol=1e-14)


def test_unknown_token():
    with pytest.raises(VocabError):
        encode_text(_fresh(), ["purple"])


def test_cosine_examples():
    u = np.array([0.3, -1.2, 2.0])
    assert cosine_score(u, u) == pytest.approx(1.0)
    assert cosine_score(u, -u) == pytest.approx(-1.0)
    assert cosine_score([1, 0], [0, 1]) == 0.0
    with pytest.raises(ValueError):
        cosine_score([0, 0], [1, 0])


def test_info_nce_bounds_and_gradient():
    rng = make_rng(0, "nce")
    a = tensor(rng.normal(size=(4, 6)))
    b = tensor(rng.normal(size=(4, 6)))
    loss = info_nce(l2_normalize(a), l2_normalize(b), 0.07).item()
    assert loss >= 0.0
    same = info_nce(l2_normalize(a), l2_normalize(a), 0.001).item()
    assert same < 1e-6
    # a narrow net keeps every LSTM gradient coordinate well above round-off
    cfg = BaselineConfig(seed=3, feat_hidden=6, embed_dim=3, lstm_hidden=4, out_dim=5)
    m = ClipToyModel(Vocab(dg.TOY_VOCAB), 5, cfg)
    for t in m.params.values():
        t.data = rng.normal(size=t.shape) * 0.5
    feats = rng.normal(size=(3, 5))
    toks = [["red", "ball"], ["blue", "rubber", "triangle"], ["green"]]
    assert grad_check(lambda: info_nce(m.text_forward(toks), m.features_forward(feats), 0.5),
                      m.params) < 1e-4


def test_batch_of_one_rejected(toy_train):
    with pytest.raises(ConfigError):
        train_baseline(toy_train, BaselineConfig(batch=1))


def test_training_halves_loss(trained):
    h = trained.loss_history
    assert h[-1] <= 0.5 * h[0]
    assert h[-1] < math.log(64)


def test_training_deterministic(toy_train, tmp_path):
    cfg = BaselineConfig(epochs=2, seed=5)
    for name in ("a", "b"):
        train_baseline(toy_train, cfg).save(tmp_path / f"{name}.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    back = ClipToyModel.load(tmp_path / "a.json")
    assert back.config == cfg


def test_select_examples(trained):
    assert select_baseline(trained, ["red", "ball"], [np.zeros(5)]) == 0
    cands = list(make_rng(1, "c").normal(size=(6, 5)))
    i = select_baseline(trained, ["red", "metal", "ball"], cands)
    perm = [5, 2, 0, 4, 1, 3]
    assert perm[select_baseline(trained, ["red", "metal", "ball"],
                                [cands[p] for p in perm])] == i
    with pytest.raises(ValueError):
        select_baseline(trained, ["red"], [np.zeros(5), np.zeros(4)])


def test_selector_scores_in_range(trained):
    sel = BaselineSelector(trained)
    f = make_rng(2, "f").normal(size=(4, 5))
    t = encode_text(trained, ["green", "rubber", "ball"])
    for row in f:
        assert -1.0 <= cosine_score(t, encode_features(trained, row)) <= 1.0
    assert 0 <= sel(["green", "rubber", "ball"], list(f)) < 4
