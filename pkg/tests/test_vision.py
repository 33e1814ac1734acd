import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from idebench import datagen as dg
from idebench.gradcore import grad_check, make_rng
from idebench.vision import (BBox, NoObjectError, VAEConfig, VaeModel, clip_patch, elbo_loss,
                             elbo_terms, extract_patch, iou, kl_term, locate, pipeline_features,
                             reconstruction_mse, saliency, train_vae, vae_decode, vae_encode)


def _saliency_oracle(img, base):
    """Direct double loop, independent of the library kernels."""
    h, w, _ = img.shape
    out = np.zeros((h, w))
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            total = 0.0
            for dr, dc in itertools.product((-1, 0, 1), repeat=2):
                if dr or dc:
                    total += 1.0 - np.sqrt(np.sum((img[r, c] - img[r + dr, c + dc]) ** 2))
            out[r, c] = base - total
    return out


# -- saliency ----------------------------------------------------------------------

def test_uniform_image_is_zero():
    s = saliency(np.full((6, 7, 3), 0.3))
    assert np.all(s.values[s.valid] == 0.0)
    assert not s.valid[0].any() and not s.valid[:, -1].any()


def test_isolated_pixel_scores_base():
    img = np.zeros((3, 3, 3))
    img[1, 1] = [1.0, 0.0, 0.0]
    assert saliency(img, 8.0).values[1, 1] == pytest.approx(8.0, abs=1e-12)


def test_three_by_three_oracle():
    img = make_rng(0, "px").random((3, 3, 3))
    for base in (8.0, 2.5):
        assert saliency(img, base).values[1, 1] == pytest.approx(
            _saliency_oracle(img, base)[1, 1], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 9), st.integers(3, 9), st.just(3)),
              elements=st.floats(0, 1)))
def test_saliency_matches_oracle(img):
    s = saliency(img)
    np.testing.assert_allclose(s.values[s.valid], _saliency_oracle(img, 8.0)[s.valid],
                               atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (5, 6, 3), elements=st.floats(0, 0.5)),
       arrays(np.float64, (3,), elements=st.floats(0, 0.5)))
def test_saliency_translation_invariant(img, shift):
    a, b = saliency(img).values, saliency(img + shift).values
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_saliency_too_small():
    with pytest.raises(ValueError):
        saliency(np.zeros((2, 5, 3)))


# -- locate and clip -------------------------------------------------------------------

def test_locate_single_salient_pixel():
    img = np.zeros((9, 9, 3))
    img[4, 6] = 1.0
    smap = saliency(img)
    smap.values[:] = np.where(np.arange(81).reshape(9, 9) == 4 * 9 + 6, 8.0, 0.0)
    assert locate(smap) == BBox(4, 4, 6, 6)


def test_locate_uniform_has_no_object():
    with pytest.raises(NoObjectError):
        locate(saliency(np.full((16, 16, 3), 0.5)))


def test_locate_contains_peak_and_matches_truth():
    for shape in dg.SCENE_SHAPES:
        s = dg.render_scene("green", shape, (30, 25), 10, noise=0.01, rng=make_rng(1))
        smap = saliency(s.pixels)
        box = locate(smap)
        peak = np.unravel_index(np.argmax(np.where(smap.valid, smap.values, -np.inf)),
                                smap.shape)
        assert box.contains(*peak)
        assert iou(box, BBox.from_list(s.bbox)) >= 0.5


def test_iou_examples():
    a = BBox(0, 9, 0, 9)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(0, 9, 5, 14)) == pytest.approx(50 / 150)
    assert iou(a, BBox(20, 21, 20, 21)) == 0.0


def test_bbox_validation():
    with pytest.raises(ValueError):
        BBox(5, 4, 0, 1)


def test_clip_center_and_corner():
    img = np.arange(64 * 64 * 3, dtype=float).reshape(64, 64, 3)
    np.testing.assert_array_equal(clip_patch(img, BBox(31, 32, 31, 32)), img[16:48, 16:48])
    np.testing.assert_array_equal(clip_patch(img, BBox(0, 3, 60, 63)), img[0:32, 32:64])
    assert clip_patch(img, BBox(60, 63, 0, 1)).shape == (32, 32, 3)


def test_clip_too_small_image():
    with pytest.raises(ValueError):
        clip_patch(np.zeros((20, 20, 3)), BBox(0, 1, 0, 1))


# -- VAE ---------------------------------------------------------------------------------

def test_kl_examples():
    assert kl_term(np.zeros(4), np.zeros(4)) == 0.0
    assert kl_term([1.0, 0, 0, 0], np.zeros(4)) == pytest.approx(0.5, abs=1e-12)
    rng = make_rng(0, "kl")
    for _ in range(100):
        assert kl_term(rng.normal(size=4), rng.normal(size=4) * 3) >= 0.0


def test_encoder_shapes_and_decoder_range():
    m = VaeModel(VAEConfig(seed=0))
    patch = make_rng(0, "p").random((32, 32, 3))
    mu, var = vae_encode(m, patch)
    assert mu.shape == (4,) and var.shape == (4,) and np.all(var > 0)
    mu2, var2 = vae_encode(m, patch)
    assert mu.tobytes() == mu2.tobytes() and var.tobytes() == var2.tobytes()
    out = vae_decode(m, make_rng(1, "z").normal(size=4) * 5)
    assert out.shape == (32, 32, 3)
    assert np.all((out > 0) & (out < 1))
    assert vae_decode(m, np.zeros((3, 4))).shape == (3, 32, 32, 3)


def test_encode_shape_mismatch():
    with pytest.raises(ValueError):
        vae_encode(VaeModel(), np.zeros((16, 16, 3)))


def test_elbo_grad_check_with_frozen_noise():
    cfg = VAEConfig(seed=3, patch_size=8, channels=(2, 3))
    m = VaeModel(cfg)
    rng = make_rng(3, "g")
    for t in m.params.values():
        t.data = rng.normal(size=t.shape) * 0.3
    x = rng.random((2, 8, 8, 3))
    eps = rng.standard_normal((2, 4))

    def f():
        sse, kl = elbo_terms(m, x, eps)
        return sse + kl
    assert grad_check(f, m.params) < 1e-3


def test_elbo_loss_deterministic_given_rng():
    m = VaeModel(VAEConfig(seed=0))
    x = make_rng(0, "x").random((2, 32, 32, 3))
    a = elbo_loss(m, x, make_rng(5)).item()
    assert a == elbo_loss(m, x, make_rng(5)).item()
    assert a != elbo_loss(m, x, make_rng(6)).item()


@pytest.fixture(scope="module")
def small_vae():
    scenes = dg.gen_scenes(make_rng(0, "scenes"), 12)
    patches = np.stack([extract_patch(s) for s in scenes])
    return train_vae(patches, VAEConfig(epochs=150, batch=50, seed=0)), patches


def test_trained_reconstruction(small_vae):
    m, patches = small_vae
    assert reconstruction_mse(m, patches) < 0.01
    assert m.loss_history[-1] < 0.5 * m.loss_history[0]


def test_trained_cycle_consistency(small_vae):
    m, patches = small_vae
    mu, _ = vae_encode(m, patches)
    mu2, _ = vae_encode(m, vae_decode(m, mu))
    assert np.all(np.mean(np.abs(mu2 - mu), axis=0) < 0.5)


def test_pipeline_features_position_invariant(small_vae):
    m, _ = small_vae
    a = dg.render_scene("red", "cube", (20, 20), 9)
    b = dg.render_scene("red", "cube", (40, 44), 9)
    fa, fb = pipeline_features(m, a), pipeline_features(m, b)
    assert np.linalg.norm(fa - fb) < 0.3
    assert fa.tobytes() == pipeline_features(m, a).tobytes()


def test_pipeline_features_no_object(small_vae):
    m, _ = small_vae
    with pytest.raises(NoObjectError):
        pipeline_features(m, np.full((64, 64, 3), 0.5))


def test_vae_training_deterministic(tmp_path):
    patches = make_rng(0, "p").random((6, 8, 8, 3))
    cfg = VAEConfig(seed=2, epochs=2, batch=3, patch_size=8, channels=(2, 3))
    for name in ("a", "b"):
        train_vae(patches, cfg).save(tmp_path / f"{name}.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    back = VaeModel.load(tmp_path / "a.json")
    assert back.config == cfg
