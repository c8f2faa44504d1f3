import math

import numpy as np
import pytest
import skimage.data
from hypothesis import given, settings
from hypothesis import strategies as st

from wmbench.attacks import (AttackPipeline, Stage, StageError, additive_gaussian,
                             changed_blocks, check_pipeline, copy_paste, copy_paste_side,
                             derive_seed, jpeg_compress, multiplicative_gaussian, run_pipeline)
from wmbench.model import AttackOutput, TamperMap, ValidationError, Work, block_view
from wmbench.registry import AttackDescriptor


@pytest.fixture(scope="module")
def camera512():
    return Work(skimage.data.camera(), origin_id="camera512")


def test_copy_paste_side_256():
    # sqrt(0.1 * 65536) = 80.95 -> nearest multiple of 8 is 80
    assert math.isclose(math.sqrt(0.1 * 256 * 256), 80.9543, abs_tol=1e-4)
    assert copy_paste_side(0.1, 256, 256) == 80
    assert copy_paste_side(0.001, 256, 256) == 8


def test_copy_paste_geometry(corpus):
    w = corpus["camera"]
    out = copy_paste(w, 0.1, seed=5)
    sx, sy = out.aux["source"]
    dx, dy = out.aux["destination"]
    s = out.aux["side"]
    assert s == 80
    assert all(v % 8 == 0 for v in (sx, sy, dx, dy))
    assert abs(sx - dx) >= s or abs(sy - dy) >= s
    assert np.array_equal(out.work.pixels[dy:dy + s, dx:dx + s], w.pixels[sy:sy + s, sx:sx + s])
    outside = np.ones(w.shape, bool)
    outside[dy:dy + s, dx:dx + s] = False
    assert np.array_equal(out.work.pixels[outside], w.pixels[outside])


def test_copy_paste_truth_is_pixel_diff(corpus):
    for seed, w in enumerate(corpus.values()):
        out = copy_paste(w, 0.1, seed)
        direct = np.any(block_view(out.work.pixels) != block_view(w.pixels), axis=(1, 2))
        assert np.array_equal(out.ground_truth.flags.ravel(), direct)
        assert out.ground_truth.count() <= 100


def test_copy_paste_constant_image():
    w = Work(np.full((256, 256), 128, dtype=np.uint8))
    out = copy_paste(w, 0.1, seed=1)
    assert out.work == w
    assert out.ground_truth.count() == 0


def test_copy_paste_deterministic(corpus):
    a = copy_paste(corpus["moon"], 0.1, 42)
    b = copy_paste(corpus["moon"], 0.1, 42)
    assert a.work == b.work and a.ground_truth == b.ground_truth and a.aux == b.aux


def test_noise_identity_at_zero_variance(corpus):
    w = corpus["coins"]
    assert additive_gaussian(w, 0.0, 0.0, 3) == w
    assert multiplicative_gaussian(w, 0.0, 0.0, 3) == w


def test_additive_variance(camera512):
    out = additive_gaussian(camera512, 0.0, 39.0, seed=2015)
    x = camera512.pixels.astype(float)
    y = out.pixels.astype(float)
    interior = (y > 0) & (y < 255) & (x > 20) & (x < 235)
    v = np.var(y[interior] - x[interior])
    assert 39 * 0.9 <= v <= 39 * 1.1


def test_additive_deterministic(corpus):
    w = corpus["gravel"]
    assert additive_gaussian(w, 0, 9, 7) == additive_gaussian(w, 0, 9, 7)
    assert additive_gaussian(w, 0, 9, 7) != additive_gaussian(w, 0, 9, 8)


def test_multiplicative_zero_fixed_points(rng):
    px = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    px[::3] = 0
    out = multiplicative_gaussian(Work(px), 0.0, 240.0, seed=9)
    assert np.all(out.pixels[px == 0] == 0)
    assert out == multiplicative_gaussian(Work(px), 0.0, 240.0, seed=9)


@settings(max_examples=30, deadline=None)
@given(mean=st.floats(-50, 50), variance=st.floats(0, 5000), seed=st.integers(0, 2 ** 32))
def test_noise_stays_in_range(mean, variance, seed):
    w = Work(np.tile(np.array([0, 1, 128, 254, 255], dtype=np.uint8), (16, 4))[:, :16])
    for out in (additive_gaussian(w, mean, variance, seed),
                multiplicative_gaussian(w, mean / 50, variance, seed)):
        assert out.shape == w.shape
        assert out.pixels.dtype == np.uint8


def test_jpeg_attack_aux(corpus):
    out = jpeg_compress(corpus["clock"], 75)
    assert out.ground_truth is None
    assert out.aux["bpp"] * 256 * 256 / 8 == out.aux["encoded_bytes"]


def test_changed_blocks():
    a = Work(np.zeros((16, 24), dtype=np.uint8))
    px = np.zeros((16, 24), dtype=np.uint8)
    px[9, 17] = 1
    m = changed_blocks(a, Work(px))
    assert m.flags.tolist() == [[False, False, False], [False, False, True]]


def test_derive_seed_stable():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed("1", "a")
    assert 0 <= derive_seed(0) < 2 ** 64


# pipelines

def test_tamper_then_jpeg(registry, corpus):
    w = corpus["camera"]
    pipe = AttackPipeline([Stage("copy-paste", {"area_fraction": 0.1}), Stage("jpeg", {"qf": 75})],
                          seed=11)
    res = run_pipeline(w, pipe, registry)
    stage1 = copy_paste(w, 0.1, derive_seed(11, 0))
    assert res.ground_truth == stage1.ground_truth
    assert res.work == jpeg_compress(stage1.work, 75).work
    assert res.bpp == res.stage_aux[1]["bpp"]


def test_jpeg_only_pipeline_has_no_truth(registry, corpus):
    res = run_pipeline(corpus["camera"], AttackPipeline([Stage("jpeg", {"qf": 90})]), registry)
    assert res.ground_truth is None
    assert res.bpp is not None


def test_empty_pipeline_rejected():
    with pytest.raises(ValidationError):
        AttackPipeline([])


def test_check_pipeline(registry):
    assert check_pipeline([Stage("copy-paste"), Stage("jpeg")], registry) == []
    problems = check_pipeline([Stage("copy-paste"), Stage("copy-paste")], registry)
    assert problems and "content-changing" in problems[0]
    assert check_pipeline([Stage("nope")], registry)


def test_stage_error_reports_index(corpus):
    from wmbench.registry import default_registry
    reg = default_registry()

    def boom(work, params, seed):
        raise RuntimeError("kaput")

    reg.register_attack(AttackDescriptor("boom"), boom)
    with pytest.raises(StageError) as info:
        run_pipeline(corpus["camera"], AttackPipeline([Stage("jpeg"), Stage("boom")]), reg)
    assert info.value.index == 1 and info.value.attack_id == "boom"


def test_identity_attack(registry, corpus):
    out = registry.apply_attack("identity", corpus["camera"])
    assert isinstance(out, AttackOutput) and out.work == corpus["camera"]


def test_params_default_and_range(registry, corpus):
    out = registry.apply_attack("jpeg", corpus["camera"])
    assert out.work == jpeg_compress(corpus["camera"], 75).work
    with pytest.raises(ValidationError):
        registry.apply_attack("jpeg", corpus["camera"], {"qf": 0})


def test_truth_map_type(registry, corpus):
    out = registry.apply_attack("copy-paste", corpus["camera"], seed=3)
    assert isinstance(out.ground_truth, TamperMap)
    assert out.ground_truth.matches(corpus["camera"])
