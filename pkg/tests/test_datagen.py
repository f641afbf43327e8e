import json
import math

import numpy as np
import pytest
from scipy import stats

from hazebayes import datagen, hazemodel, metrics


class TestDepth:
    def test_ramp_monotone(self):
        d = datagen.gen_depth(16, 24, "linear-ramp", seed=3)
        assert np.all(np.diff(d[..., 0], axis=1) > 0)

    def test_radial_centre_shallower(self):
        d = datagen.gen_depth(31, 31, "radial", seed=3)[..., 0]
        for corner in (d[0, 0], d[0, -1], d[-1, 0], d[-1, -1]):
            assert d[15, 15] < corner

    def test_layered_steps_piecewise(self):
        d = datagen.gen_depth(40, 10, "layered-steps", seed=9)[..., 0]
        assert np.all(d == d[:, :1])
        assert 2 <= len(np.unique(d)) <= 5

    @pytest.mark.parametrize("kind", datagen.DEPTH_KINDS)
    def test_deterministic_and_bounded(self, kind):
        a = datagen.gen_depth(12, 12, kind, seed=5)
        np.testing.assert_array_equal(a, datagen.gen_depth(12, 12, kind, seed=5))
        assert a.min() >= 0 and a.max() <= datagen.D_MAX

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            datagen.gen_depth(4, 4, "spiral")


class TestScatter:
    def test_in_range_and_uniform(self):
        r = np.random.default_rng(0)
        draws = np.array([datagen.sample_scatter(r) for _ in range(10_000)])
        A, beta = draws[:, 0], draws[:, 1]
        assert A.min() >= 0.7 and A.max() <= 1.0
        assert beta.min() >= 0.5 and beta.max() <= 2.0
        for v, lo, hi in ((A, 0.7, 1.0), (beta, 0.5, 2.0)):
            counts, _ = np.histogram(v, bins=20, range=(lo, hi))
            assert stats.chisquare(counts).pvalue > 0.001

    @pytest.mark.parametrize("A_range,beta_range", [((0.0, 1.0), (0.5, 2)), ((0.7, 1.2), (0.5, 2)), ((0.7, 1.0), (0.0, 2))])
    def test_invalid_ranges(self, A_range, beta_range):
        with pytest.raises(ValueError):
            datagen.sample_scatter(np.random.default_rng(0), A_range, beta_range)


class TestSynthesis:
    def test_thin_haze_close_to_clean(self):
        clean = datagen.gen_clean(32, 32, seed=1)
        depth = datagen.gen_depth(32, 32, "linear-ramp", seed=1, d_max=0.1)
        trip = datagen.make_triplet(clean, depth, A=0.85, beta=0.5)
        assert metrics.psnr(trip.hazy, trip.clean) > 25

    def test_airlight_limit(self):
        clean = datagen.gen_clean(16, 64, seed=2)
        depth = np.tile(np.linspace(0, 40, 64), (16, 1))[..., None]
        trip = datagen.make_triplet(clean, depth, A=1.0, beta=2.0)
        np.testing.assert_allclose(trip.hazy[:, -1], 1.0, atol=1e-12)

    def test_dataset_deterministic(self):
        a = datagen.synthetic_dataset(3, 16, seed=4)
        b = datagen.synthetic_dataset(3, 16, seed=4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.hazy, y.hazy)
            assert (x.A, x.beta) == (y.A, y.beta)

    def test_clean_has_dark_channel(self):
        clean = datagen.gen_clean(32, 32, seed=0)
        assert np.median(clean.min(axis=2)) < 0.25


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    cleans = [datagen.gen_clean(24, 20, seed=s) for s in range(2)]
    manifest = datagen.gen_triplets(cleans, out, n_per_image=3, seed=8)
    return out, cleans, manifest


class TestManifest:
    def test_layout(self, generated):
        out, _, manifest = generated
        assert len(manifest["records"]) == 6
        for rec in manifest["records"]:
            for key in ("clean", "hazy", "trans", "clean_png", "hazy_png", "trans_png"):
                assert (out / rec[key]).exists()
            assert 0.7 <= rec["A"] <= 1.0 and 0.5 <= rec["beta"] <= 2.0
        assert json.loads((out / "manifest.json").read_text()) == manifest
        assert manifest["records"][0]["clean"] == "clean/0000.pfm"

    def test_hazy_matches_model(self, generated):
        out, cleans, manifest = generated
        for rec, trip in zip(manifest["records"], datagen.load_manifest(out / "manifest.json")):
            f32 = np.float32
            expect = hazemodel.synthesize_hazy(trip.clean, trip.trans, rec["A"]).astype(f32)
            np.testing.assert_allclose(trip.hazy, expect, atol=2e-7)
            np.testing.assert_array_equal(trip.clean, cleans[rec["source"]].astype(f32).astype(np.float64))

    def test_transmission_round_trip(self, generated):
        out, _, manifest = generated
        for rec, trip in zip(manifest["records"], datagen.load_manifest(out / "manifest.json")):
            mask = np.all(np.abs(trip.clean - rec["A"]) >= 0.2, axis=2)
            if not mask.any():
                continue
            y, x = trip.hazy[mask][:, None, :], trip.clean[mask][:, None, :]
            t = np.exp(hazemodel.log_transmission_from_pair(y, x, rec["A"]))
            assert np.max(np.abs(t - trip.trans[mask][:, None, :])) < 1e-6

    def test_deterministic(self, tmp_path):
        cleans = [datagen.gen_clean(8, 8, seed=0)]
        m1 = datagen.gen_triplets(cleans, tmp_path / "a", n_per_image=2, seed=1)
        m2 = datagen.gen_triplets(cleans, tmp_path / "b", n_per_image=2, seed=1)
        assert m1 == m2
        assert (tmp_path / "a/hazy/0001.pfm").read_bytes() == (tmp_path / "b/hazy/0001.pfm").read_bytes()

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            datagen.gen_triplets([], tmp_path)
