import sys

import numpy as np
import pytest

from ccol.errors import (
    DegenerateCorpusError,
    DimensionMismatchError,
    FrameTooSmallError,
    ScorerError,
)
from ccol.quality import (
    HIGHER_IS_BETTER,
    LOWER_IS_BETTER,
    ExternalScorer,
    FaceRegion,
    QualityModel,
    QualityScore,
    brisque_features,
    brisque_score,
    face_quality_score,
    fit_aggd,
    fit_ggd,
    fit_quality_model,
    gaussian_feature_distance,
    mscn_coefficients,
    niqe_score,
    patch_feature_vectors,
)

from conftest import constant_frame, textured_frame


def gaussian_blur(frame: np.ndarray, sigma: float) -> np.ndarray:
    """Test-side separable Gaussian blur (edge padding), independent of
    the implementation's filtering code."""
    if sigma == 0:
        return frame.copy()
    radius = max(1, int(np.ceil(3 * sigma)))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-(x**2) / (2 * sigma**2))
    k /= k.sum()
    out = frame.astype(np.float64)
    for axis in (0, 1):
        padded = np.pad(
            out,
            [(radius, radius) if a == axis else (0, 0) for a in range(out.ndim)],
            mode="edge",
        )
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


class TestMscn:
    def test_constant_frame_gives_zero_field(self):
        m = mscn_coefficients(constant_frame(32, 32, 77))
        assert m.shape == (32, 32)
        assert np.all(m == 0.0)

    def test_mean_near_zero_on_natural_fixture(self):
        m = mscn_coefficients(textured_frame(3, 256, 256))
        assert abs(m.mean()) < 0.1

    def test_contrast_scaling_invariance_where_sigma_large(self):
        # high-contrast synthetic: local sigma far above C=1 everywhere
        yy, xx = np.mgrid[0:128, 0:128].astype(np.float64)
        rng = np.random.default_rng(5)
        base = 100 * np.sin(xx / 2.3) * np.cos(yy / 3.1) + rng.normal(0, 20, (128, 128))
        m1 = mscn_coefficients(base)
        m2 = mscn_coefficients(2.0 * base)
        assert np.abs(m1 - m2).max() < 0.05

    def test_too_small_raises(self):
        with pytest.raises(FrameTooSmallError):
            mscn_coefficients(constant_frame(8, 32, 0))


class TestDistributionFits:
    def test_ggd_recovers_known_shapes(self):
        # inverse-transform sampling: |x|^a ~ Gamma(1/a); independent of
        # the moment-matching estimator under test
        rng = np.random.default_rng(11)
        for true_shape in (0.8, 1.5, 2.0, 3.0):
            g = rng.gamma(1.0 / true_shape, 1.0, size=300000) ** (1.0 / true_shape)
            x = g * rng.choice([-1.0, 1.0], size=g.shape)
            shape, variance = fit_ggd(x)
            assert shape == pytest.approx(true_shape, rel=0.05)
            assert variance == pytest.approx(np.mean(x * x), rel=1e-12)

    def test_ggd_gaussian_samples_give_shape_two(self):
        rng = np.random.default_rng(12)
        shape, _ = fit_ggd(rng.normal(0, 1, 400000))
        assert shape == pytest.approx(2.0, abs=0.05)

    def test_ggd_degenerate_fallback(self):
        shape, variance = fit_ggd(np.zeros(100))
        assert shape == 2.0
        assert variance == 1e-6

    def test_aggd_symmetric_gaussian(self):
        rng = np.random.default_rng(13)
        shape, mean, var_l, var_r = fit_aggd(rng.normal(0, 1, 400000))
        assert shape == pytest.approx(2.0, abs=0.1)
        assert abs(mean) < 0.01
        assert var_l == pytest.approx(var_r, rel=0.05)

    def test_aggd_detects_asymmetry(self):
        rng = np.random.default_rng(14)
        x = rng.normal(0, 1, 400000)
        x[x < 0] *= 0.5  # squeeze the left tail
        _, mean, var_l, var_r = fit_aggd(x)
        assert var_l < var_r
        assert mean > 0

    def test_aggd_degenerate_fallback(self):
        assert fit_aggd(np.zeros(50)) == (2.0, 0.0, 1e-6, 1e-6)


class TestBrisqueFeatures:
    def test_length_is_36(self):
        assert brisque_features(textured_frame(0)).shape == (36,)

    def test_constant_frame_fallback_vector(self):
        v = brisque_features(constant_frame(32, 32, 128))
        expected18 = [2.0, 1e-6] + [2.0, 0.0, 1e-6, 1e-6] * 4
        assert np.array_equal(v, np.array(expected18 * 2))

    def test_deterministic_bit_for_bit(self):
        f = textured_frame(9)
        assert np.array_equal(brisque_features(f), brisque_features(f.copy()))

    def test_gaussian_white_noise_shape_near_two(self):
        rng = np.random.default_rng(15)
        plane = np.clip(rng.normal(128, 40, size=(128, 128, 1)), 0, 255).astype(np.uint8)
        noise = np.repeat(plane, 3, axis=-1)
        v = brisque_features(noise)
        # local normalization compresses tails, so "near 2" is a band,
        # not a point; the sampler oracle above pins the fitter itself
        assert 1.5 < v[0] < 3.5

    def test_too_small_raises(self):
        with pytest.raises(FrameTooSmallError):
            brisque_features(constant_frame(16, 16, 0))


class TestQualityModel:
    def test_identical_frames_give_zero_covariance(self):
        f = textured_frame(1)
        model = fit_quality_model([f, f.copy(), f.copy()])
        assert np.allclose(model.covariance, 0.0)

    def test_two_frame_mean_is_average(self):
        f1, f2 = textured_frame(1, 64, 64), textured_frame(2, 64, 64)
        model = fit_quality_model([f1, f2])
        v1 = patch_feature_vectors(f1)[0]
        v2 = patch_feature_vectors(f2)[0]
        assert np.allclose(model.mean, (v1 + v2) / 2.0)

    def test_all_constant_corpus_rejected(self):
        with pytest.raises(DegenerateCorpusError):
            fit_quality_model([constant_frame(32, 32, 10), constant_frame(32, 32, 200)])

    def test_needs_two_frames(self):
        with pytest.raises(DegenerateCorpusError):
            fit_quality_model([textured_frame(0)])

    def test_json_round_trip(self, tmp_path):
        model = fit_quality_model([textured_frame(i) for i in range(4)])
        model.save(tmp_path / "m.json")
        loaded = QualityModel.load(tmp_path / "m.json")
        assert loaded.feature_dim == model.feature_dim
        assert np.array_equal(loaded.mean, model.mean)
        assert np.array_equal(loaded.covariance, model.covariance)

    def test_asymmetric_covariance_rejected(self):
        cov = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(ValueError):
            QualityModel(mean=np.zeros(2), covariance=cov, feature_dim=2)


class TestNiqeScore:
    def test_zero_when_statistics_match_model(self):
        f = textured_frame(4)
        model = fit_quality_model([f, f.copy()])
        assert niqe_score(f, model).value == pytest.approx(0.0, abs=1e-9)

    def test_two_dim_diagonal_closed_form(self):
        # hand-evaluable case of the score's distance kernel
        d = gaussian_feature_distance(
            np.array([1.0, 2.0]), np.diag([2.0, 4.0]),
            np.array([4.0, -2.0]), np.diag([6.0, 2.0]),
        )
        eps = 1e-6
        expected = np.sqrt(9.0 / (4.0 + eps) + 16.0 / (3.0 + eps))
        assert d == pytest.approx(expected, abs=1e-12)

    def test_member_scores_better_than_noise(self):
        corpus = [textured_frame(i) for i in range(20)]
        model = fit_quality_model(corpus)
        rng = np.random.default_rng(16)
        noise = np.repeat(
            rng.integers(0, 256, size=(128, 128, 1)).astype(np.uint8), 3, axis=-1
        )
        member = niqe_score(corpus[0], model).value
        noisy = niqe_score(noise, model).value
        assert member < noisy

    def test_blurred_scores_worse_than_sharp(self):
        corpus = [textured_frame(i) for i in range(20)]
        model = fit_quality_model(corpus)
        sharp = textured_frame(0)
        blurred = gaussian_blur(sharp, 2.0)
        assert niqe_score(sharp, model).value < niqe_score(blurred, model).value

    def test_polarity_and_nonnegativity(self):
        model = fit_quality_model([textured_frame(i) for i in range(3)])
        s = niqe_score(textured_frame(7), model)
        assert s.polarity == LOWER_IS_BETTER
        assert s.value >= 0.0

    def test_dimension_mismatch(self):
        model = QualityModel(mean=np.zeros(3), covariance=np.eye(3), feature_dim=3)
        with pytest.raises(DimensionMismatchError):
            niqe_score(textured_frame(0), model)


class TestBrisqueScore:
    def _model(self, rng, dim=36):
        a = rng.normal(size=(dim, dim))
        cov = a @ a.T / dim
        return QualityModel(mean=rng.normal(size=dim), covariance=cov, feature_dim=dim)

    def test_zero_at_model_mean(self, rng):
        model = self._model(rng)
        s = brisque_score(model.mean.copy(), model)
        assert s.value == pytest.approx(0.0, abs=1e-9)
        assert s.polarity == LOWER_IS_BETTER

    def test_matches_bruteforce_linear_algebra_oracle(self, rng):
        for _ in range(10):
            model = self._model(rng)
            v = rng.normal(size=36)
            got = brisque_score(v, model).value
            pooled = model.covariance / 2.0 + 1e-6 * np.eye(36)
            d = v - model.mean
            expected = float(np.sqrt(d @ np.linalg.inv(pooled) @ d))
            assert got == pytest.approx(expected, rel=1e-9)

    def test_distance_symmetric_for_equal_covariances(self, rng):
        cov = np.eye(4) * 3.0
        m1, m2 = rng.normal(size=4), rng.normal(size=4)
        assert gaussian_feature_distance(m1, cov, m2, cov) == pytest.approx(
            gaussian_feature_distance(m2, cov, m1, cov), rel=1e-12
        )

    def test_dimension_mismatch(self, rng):
        model = self._model(rng)
        with pytest.raises(DimensionMismatchError):
            brisque_score(np.zeros(10), model)


class TestFaceQuality:
    def test_constant_frame_scores_zero(self):
        s = face_quality_score(constant_frame(64, 64, 99))
        assert s.value == 0.0
        assert s.polarity == HIGHER_IS_BETTER

    def test_sharp_beats_blurred(self):
        sharp = textured_frame(6)
        assert (
            face_quality_score(sharp).value
            > face_quality_score(gaussian_blur(sharp, 2.0)).value
        )

    def test_strictly_decreasing_under_blur(self):
        # blur the float luma plane: uint8 re-quantization would add a
        # Laplacian noise floor that masks the strict ordering at sigma=4
        from ccol.color import luma601_float

        sharp = luma601_float(textured_frame(8))
        values = []
        for sigma in (0, 1, 2, 4):
            plane = sharp.copy()
            if sigma:
                radius = int(np.ceil(3 * sigma))
                x = np.arange(-radius, radius + 1)
                k = np.exp(-(x**2) / (2 * sigma**2))
                k /= k.sum()
                for axis in (0, 1):
                    padded = np.pad(
                        plane,
                        [(radius, radius) if a == axis else (0, 0) for a in range(2)],
                        mode="edge",
                    )
                    acc = np.zeros_like(plane)
                    for i, w in enumerate(k):
                        sl = [slice(None)] * 2
                        sl[axis] = slice(i, i + plane.shape[axis])
                        acc += w * padded[tuple(sl)]
                    plane = acc
            values.append(face_quality_score(plane).value)
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_translation_invariant_for_fixed_content(self, rng):
        patch = (rng.integers(0, 256, size=(16, 16, 1))).astype(np.uint8)
        patch = np.repeat(patch, 3, axis=-1)
        f = constant_frame(64, 64, 128)
        g = constant_frame(64, 64, 128)
        f[4:20, 4:20] = patch
        g[40:56, 30:46] = patch
        s_f = face_quality_score(f, FaceRegion(4, 4, 16, 16))
        s_g = face_quality_score(g, FaceRegion(30, 40, 16, 16))
        assert s_f.value == s_g.value

    def test_region_out_of_bounds(self):
        with pytest.raises(ValueError):
            face_quality_score(constant_frame(32, 32, 0), FaceRegion(20, 20, 16, 16))

    def test_region_minimum_size(self):
        with pytest.raises(ValueError):
            FaceRegion(0, 0, 4, 4)


class TestExternalScorer:
    def _scorer_script(self, tmp_path, body: str):
        script = tmp_path / "scorer.py"
        script.write_text(body)
        return script

    def test_passthrough_value_and_polarity(self, tmp_path):
        script = self._scorer_script(
            tmp_path, "import sys\nprint(0.73)\n"
        )
        scorer = ExternalScorer(
            command=[sys.executable, str(script)],
            polarity=HIGHER_IS_BETTER,
            scorer_id="fixture-fiq",
        )
        s = scorer(constant_frame(16, 16, 40))
        assert s == QualityScore(0.73, HIGHER_IS_BETTER, "fixture-fiq")

    def test_scorer_receives_score_verb_and_readable_png(self, tmp_path):
        script = self._scorer_script(
            tmp_path,
            "import sys\n"
            "from PIL import Image\n"
            "assert sys.argv[1] == 'score'\n"
            "img = Image.open(sys.argv[2])\n"
            "print(img.size[0])\n",
        )
        scorer = ExternalScorer(
            command=[sys.executable, str(script)], polarity=LOWER_IS_BETTER
        )
        assert scorer(constant_frame(16, 24, 0)).value == 24.0

    def test_nonzero_exit_raises(self, tmp_path):
        script = self._scorer_script(tmp_path, "import sys\nsys.exit(3)\n")
        scorer = ExternalScorer(
            command=[sys.executable, str(script)], polarity=LOWER_IS_BETTER
        )
        with pytest.raises(ScorerError):
            scorer(constant_frame(16, 16, 0))

    def test_garbage_output_raises(self, tmp_path):
        script = self._scorer_script(tmp_path, "print('not-a-number')\n")
        scorer = ExternalScorer(
            command=[sys.executable, str(script)], polarity=LOWER_IS_BETTER
        )
        with pytest.raises(ScorerError):
            scorer(constant_frame(16, 16, 0))

    def test_from_config_accepts_string_command(self):
        scorer = ExternalScorer.from_config(
            {"command": "python3 scorer.py", "polarity": HIGHER_IS_BETTER, "id": "x"}
        )
        assert scorer.command == ["python3", "scorer.py"]
        assert scorer.scorer_id == "x"


def test_quality_score_requires_finite_value():
    with pytest.raises(ValueError):
        QualityScore(float("nan"), LOWER_IS_BETTER, "x")
