import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipetrack.channel import (
    InsufficientDataError,
    PathLossModel,
    RangingSample,
    fit_model,
    invert_distance,
    load_model,
    load_ranging_csv,
    predict_rss,
    residual_mse,
    sample_rss,
    save_model,
    save_ranging_csv,
)

EXO800 = PathLossModel(rss_d0=-54.5, n=1.8638)
ACTIVE = PathLossModel(rss_d0=-56.5, n=1.8261)

models = st.builds(
    PathLossModel,
    rss_d0=st.floats(-80, -30),
    n=st.floats(1.0, 4.0),
    sigma=st.just(0.0),
    d0=st.just(1.0),
)


class TestPredict:
    def test_reference_distance_passive(self):
        assert predict_rss(EXO800, 1.0) == pytest.approx(-54.5)

    def test_reference_distance_active(self):
        assert predict_rss(ACTIVE, 1.0) == pytest.approx(-56.5)

    def test_ten_meters(self):
        # -54.5 - 10 * 1.8638 * log10(10)
        assert predict_rss(EXO800, 10.0) == pytest.approx(-73.138, abs=1e-9)

    @pytest.mark.parametrize("bad", [0.0, -1.0, -0.001])
    def test_nonpositive_distance_rejected(self, bad):
        with pytest.raises(ValueError):
            predict_rss(EXO800, bad)

    @given(m=models, d1=st.floats(0.5, 100), d2=st.floats(0.5, 100))
    def test_strictly_decreasing(self, m, d1, d2):
        if d1 == d2:
            return
        lo, hi = min(d1, d2), max(d1, d2)
        assert predict_rss(m, lo) > predict_rss(m, hi)


class TestInvert:
    def test_reference(self):
        assert invert_distance(EXO800, -54.5) == pytest.approx(1.0)

    def test_ten_meters(self):
        assert invert_distance(EXO800, -73.138) == pytest.approx(10.0, rel=1e-9)

    @given(m=models, d=st.floats(0.5, 100))
    def test_round_trip(self, m, d):
        back = invert_distance(m, predict_rss(m, d))
        assert abs(back - d) / d < 1e-9


class TestModelValidation:
    @pytest.mark.parametrize("kw", [
        {"n": 0.0}, {"n": -1.0}, {"sigma": -0.1}, {"d0": 0.0},
    ])
    def test_bad_parameters(self, kw):
        base = {"rss_d0": -54.5, "n": 1.8638, "sigma": 0.0, "d0": 1.0}
        base.update(kw)
        with pytest.raises(ValueError):
            PathLossModel(**base)

    def test_nonpositive_sample_distance(self):
        with pytest.raises(ValueError):
            RangingSample(0.0, -60.0)


class TestFit:
    def test_two_point_hand_solution(self):
        fit = fit_model([RangingSample(1.0, -50.0), RangingSample(10.0, -70.0)])
        assert fit.n == pytest.approx(2.0, abs=1e-12)
        assert fit.rss_d0 == pytest.approx(-50.0, abs=1e-12)
        assert fit.sigma == 0.0

    def test_noiseless_recovery_exact(self):
        samples = [
            RangingSample(d, predict_rss(EXO800, d))
            for d in [0.5, 1.0, 2.0, 5.0, 7.5, 12.0, 40.0]
        ]
        fit = fit_model(samples)
        assert fit.n == pytest.approx(EXO800.n, abs=1e-9)
        assert fit.rss_d0 == pytest.approx(EXO800.rss_d0, abs=1e-9)

    def test_seeded_noisy_recovery(self):
        # Monte-Carlo oracle run ahead of time: seed 42 recovers n within
        # 0.021 and rss_d0 within 0.17 for both parameter pairs.
        rng = random.Random(42)
        m = PathLossModel(-54.5, 1.8638, sigma=3.0)
        samples = []
        for _ in range(1000):
            d = rng.uniform(1.0, 15.0)
            samples.append(RangingSample(d, sample_rss(m, d, rng)))
        fit = fit_model(samples)
        assert abs(fit.n - m.n) < 0.1
        assert abs(fit.rss_d0 - m.rss_d0) < 1.0
        assert fit.sigma == pytest.approx(3.0, rel=0.1)

    def test_insufficient_distinct_distances(self):
        with pytest.raises(InsufficientDataError):
            fit_model([RangingSample(2.0, -60.0), RangingSample(2.0, -61.0)])
        with pytest.raises(InsufficientDataError):
            fit_model([RangingSample(2.0, -60.0)])

    def test_fit_minimizes_mse(self):
        rng = random.Random(7)
        m = PathLossModel(-54.5, 1.8638, sigma=2.0)
        samples = [
            RangingSample(d, sample_rss(m, d, rng))
            for d in [1, 2, 3, 5, 8, 11, 14] * 3
        ]
        fit = fit_model(samples)
        best = residual_mse(fit, samples)
        for dn in (-1e-3, 1e-3):
            for dr in (-1e-3, 1e-3):
                perturbed = PathLossModel(fit.rss_d0 + dr, fit.n + dn, 0.0)
                assert residual_mse(perturbed, samples) >= best


class TestSampleRss:
    def test_zero_sigma_is_exact(self):
        rng = random.Random(1)
        assert sample_rss(EXO800, 5.0, rng) == predict_rss(EXO800, 5.0)

    def test_same_seed_same_draws(self):
        m = PathLossModel(-54.5, 1.8638, sigma=3.0)
        a = [sample_rss(m, 5.0, random.Random(123)) for _ in range(1)]
        b = [sample_rss(m, 5.0, random.Random(123)) for _ in range(1)]
        assert a == b

    def test_law_of_large_numbers(self):
        m = PathLossModel(-54.5, 1.8638, sigma=3.0)
        rng = random.Random(99)
        draws = [sample_rss(m, 5.0, rng) for _ in range(100_000)]
        mean = sum(draws) / len(draws)
        var = sum((x - mean) ** 2 for x in draws) / (len(draws) - 1)
        assert abs(mean - predict_rss(m, 5.0)) < 0.1
        assert abs(math.sqrt(var) - 3.0) / 3.0 < 0.05


class TestSerialization:
    def test_model_round_trip(self, tmp_path):
        m = PathLossModel(-54.5, 1.8638, sigma=2.5, d0=1.0)
        save_model(m, tmp_path / "model.json")
        assert load_model(tmp_path / "model.json") == m

    def test_ranging_csv_round_trip(self, tmp_path):
        samples = [RangingSample(1.0, -54.5), RangingSample(10.0, -73.1)]
        save_ranging_csv(samples, tmp_path / "r.csv")
        loaded = load_ranging_csv(tmp_path / "r.csv")
        assert loaded == samples

    def test_ranging_csv_skips_junk(self, tmp_path):
        (tmp_path / "r.csv").write_text(
            "distance_m,rss_dbm\n1.0,-54.5\nnot,a,row\ngarbage\n2.0,-60.0\n"
        )
        loaded = load_ranging_csv(tmp_path / "r.csv")
        assert loaded == [RangingSample(1.0, -54.5), RangingSample(2.0, -60.0)]
