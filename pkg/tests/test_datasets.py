import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwenhance import datasets
from uwenhance.datasets import (
    WATER_TYPES,
    RgbdSample,
    build_dataset,
    load_manifest,
    load_quad,
    load_real_pool,
    sample_params,
    synthesize_quad,
)
from uwenhance.errors import DataError, ValidationError


class TestSampleParams:
    def test_type_d_is_deterministic(self):
        for seed in (0, 1, 12345):
            p = sample_params(WATER_TYPES["d"], np.random.default_rng(seed))
            assert np.allclose(p.nrer, [0.67, 0.73, 0.67])
            assert np.allclose(p.background, [0.15, 0.80, 0.70])

    def test_type_b_lower_bound_with_zero_stub(self):
        class ZeroRng:
            def random(self, n):
                return np.zeros(n)

        p = sample_params(WATER_TYPES["b"], ZeroRng())
        assert np.allclose(p.nrer, [0.79, 0.92, 0.94])
        assert np.allclose(p.background, [0.05, 0.60, 0.70])

    def test_type_b_upper_bound_with_one_stub(self):
        class OneRng:
            def random(self, n):
                return np.ones(n)

        p = sample_params(WATER_TYPES["b"], OneRng())
        assert np.allclose(p.nrer, [0.85, 0.98, 0.99])
        assert np.allclose(p.background, [0.20, 0.90, 0.99])

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), type_id=st.sampled_from(["b", "c", "d"]))
    def test_samples_stay_in_intervals(self, seed, type_id):
        spec = WATER_TYPES[type_id]
        p = sample_params(spec, np.random.default_rng(seed))
        lo, hi = np.asarray(spec.nrer_base), np.asarray(spec.nrer_base) + np.asarray(spec.nrer_span)
        assert ((p.nrer >= lo) & (p.nrer <= hi)).all()
        lo, hi = np.asarray(spec.bg_base), np.asarray(spec.bg_base) + np.asarray(spec.bg_span)
        assert ((p.background >= lo) & (p.background <= hi)).all()


class TestSynthesizeQuad:
    def _sample(self, size=24, seed=0, depth=None):
        rng = np.random.default_rng(seed)
        image = rng.random((size, size, 3))
        if depth is None:
            depth = rng.random((size, size)) * 2.0
        return RgbdSample(image=image, depth=depth, id="s")

    def test_zero_depth_gives_identity(self):
        sample = self._sample(depth=np.zeros((24, 24)))
        quad = synthesize_quad(sample, WATER_TYPES["d"], np.random.default_rng(0), resolution=None)
        assert np.allclose(quad.underwater, quad.ground_truth)

    def test_uniform_depth_blends_per_channel(self):
        sample = self._sample(depth=np.ones((24, 24)))
        quad = synthesize_quad(
            sample, WATER_TYPES["d"], np.random.default_rng(0),
            resolution=None, max_depth=3.0,
        )
        # depth 1 raw -> 1 attenuation unit, so t equals the nrer vector
        t = np.array([0.67, 0.73, 0.67])
        expected = sample.image * t + np.array([0.15, 0.80, 0.70]) * (1 - t)
        assert np.abs(quad.underwater - expected).max() < 1e-9

    def test_self_consistency(self):
        quad = synthesize_quad(self._sample(), WATER_TYPES["b"], np.random.default_rng(3), resolution=None)
        assert quad.reconstruction_error() < 1e-5

    def test_resizes_to_train_resolution(self):
        quad = synthesize_quad(self._sample(size=40), WATER_TYPES["c"], np.random.default_rng(1), resolution=16)
        assert quad.underwater.shape == (16, 16, 3)
        assert quad.transmission.shape == (16, 16, 3)
        assert quad.reconstruction_error() < 1e-5

    def test_mismatched_rgbd_rejected(self):
        with pytest.raises(ValidationError):
            RgbdSample(image=np.zeros((4, 4, 3)), depth=np.zeros((5, 5)), id="bad")


class TestBuildDataset:
    def test_zero_count_empty_manifest(self, corpus_dir, tmp_path):
        manifest = build_dataset(str(corpus_dir), [WATER_TYPES["d"]], 0, str(tmp_path / "out"), seed=1)
        assert manifest["records"] == []
        assert not [f for f in os.listdir(tmp_path / "out") if f.endswith(".png")]

    def test_deterministic_rebuild(self, corpus_dir, tmp_path):
        specs = [WATER_TYPES[t] for t in "bcd"]
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        build_dataset(str(corpus_dir), specs, 4, str(out1), seed=7, resolution=16)
        build_dataset(str(corpus_dir), specs, 4, str(out2), seed=7, resolution=16)
        m1 = (out1 / "manifest.json").read_bytes()
        m2 = (out2 / "manifest.json").read_bytes()
        assert m1 == m2
        for name in sorted(os.listdir(out1)):
            if name.endswith(".png"):
                assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_quads_roundtrip_and_self_consistent(self, corpus_dir, tmp_path):
        out = tmp_path / "out"
        manifest = build_dataset(
            str(corpus_dir), [WATER_TYPES[t] for t in "bcd"], 4, str(out), seed=5, resolution=16
        )
        assert len(manifest["records"]) == 12
        for record in manifest["records"]:
            quad = load_quad(str(out), record)
            # stored underwater image is 8-bit quantized
            assert quad.reconstruction_error() <= 2 / 255

    def test_corrupt_source_skipped_with_report(self, corpus_dir, tmp_path):
        (corpus_dir / "broken.png").write_bytes(b"not a png")
        (corpus_dir / "broken_depth.npy").write_bytes(b"junk")
        manifest = build_dataset(str(corpus_dir), [WATER_TYPES["d"]], 2, str(tmp_path / "out"), seed=1)
        assert len(manifest["skipped"]) == 1
        assert "broken" in manifest["skipped"][0]["source"]
        assert len(manifest["records"]) == 2

    def test_missing_corpus_raises(self, tmp_path):
        with pytest.raises(DataError):
            build_dataset(str(tmp_path / "nope"), [WATER_TYPES["d"]], 2, str(tmp_path / "out"), seed=1)

    def test_manifest_loads_back(self, corpus_dir, tmp_path):
        out = tmp_path / "out"
        build_dataset(str(corpus_dir), [WATER_TYPES["d"]], 2, str(out), seed=2, resolution=16)
        manifest = load_manifest(str(out))
        assert len(manifest["records"]) == 2
        ids = [r["id"] for r in manifest["records"]]
        assert len(set(ids)) == len(ids)


class TestRealPool:
    def test_empty_dir_gives_empty_pool(self, tmp_path):
        pool, skipped = load_real_pool(str(tmp_path / "empty"))
        assert pool == [] and skipped == []

    def test_valid_images_decoded_in_range(self, real_pool_dir):
        pool, skipped = load_real_pool(str(real_pool_dir), resolution=16)
        assert len(pool) == 3 and not skipped
        for img in pool:
            assert img.shape == (16, 16, 3)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_corrupt_image_reported(self, real_pool_dir):
        (real_pool_dir / "junk.png").write_bytes(b"garbage")
        pool, skipped = load_real_pool(str(real_pool_dir), resolution=None)
        assert len(pool) == 3
        assert len(skipped) == 1 and "junk" in skipped[0]["source"]
