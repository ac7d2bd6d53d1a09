import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from scipy import stats

from priceband import data_ingest as di
from priceband import weather_volatility as wv
from priceband.errors import (
    CalibrationDegenerate,
    IncompleteWindow,
    InsufficientData,
    LengthMismatch,
    ZeroVariance,
)


# --- window variance -----------------------------------------------------------

def test_constant_series_zero_variance():
    assert wv.window_variance(np.full(48, 0.3)) == 0.0


def test_alternating_samples_quarter_variance():
    values = np.zeros(48)
    values[24:39] = np.tile([0.0, 1.0], 8)[:15]
    # population variance of {0,1} split 8/7 over 15 samples
    expected = np.var(values[24:39])
    assert wv.window_variance(values) == pytest.approx(expected, abs=1e-15)
    even = np.zeros(48)
    even[24:38] = np.tile([0.0, 1.0], 7)
    assert wv.window_variance(even, range(24, 38)) == pytest.approx(0.25, abs=1e-15)


def test_variance_matches_two_pass_oracle():
    rng = np.random.default_rng(7)
    values = np.full(48, np.nan)
    window = range(10, 24)  # 14 samples
    samples = rng.uniform(0, 1, 14)
    values[10:24] = samples
    mean = sum(samples) / len(samples)
    oracle = sum((s - mean) ** 2 for s in samples) / len(samples)
    assert wv.window_variance(values, window) == pytest.approx(oracle, abs=1e-12)


def test_incomplete_window_rejected():
    values = np.full(48, 0.5)
    values[30] = np.nan
    with pytest.raises(IncompleteWindow):
        wv.window_variance(values)
    with pytest.raises(IncompleteWindow):
        wv.window_variance(np.ones(10), range(24, 39))


# --- classification -------------------------------------------------------------

def test_classification_reference_bands():
    thresholds = wv.default_thresholds()
    assert wv.classify_volatility("temperature", 0.001, thresholds) is wv.VolatilityLevel.NORMAL
    assert wv.classify_volatility("temperature", 0.004, thresholds) is wv.VolatilityLevel.MEDIUM
    assert wv.classify_volatility("irradiance", 0.07, thresholds) is wv.VolatilityLevel.HIGH
    assert wv.classify_volatility("wind", 0.02, thresholds) is wv.VolatilityLevel.HIGH


def test_classification_boundary_is_lower_inclusive():
    thresholds = wv.default_thresholds()
    assert wv.classify_volatility("temperature", 0.0019, thresholds) is wv.VolatilityLevel.LOW
    assert wv.classify_volatility("temperature", 0.0058, thresholds) is wv.VolatilityLevel.HIGH


def test_classification_monotone():
    thresholds = wv.default_thresholds()
    rng = np.random.default_rng(3)
    variances = np.sort(rng.uniform(0, 0.03, 100))
    levels = [wv.classify_volatility("temperature", v, thresholds) for v in variances]
    assert all(a <= b for a, b in zip(levels, levels[1:]))


# --- sigma selection -------------------------------------------------------------

def test_sigma_worked_example():
    thresholds = wv.default_thresholds()
    levels = {
        "temperature": wv.classify_volatility("temperature", 0.004, thresholds),
        "irradiance": wv.classify_volatility("irradiance", 0.07, thresholds),
        "wind": wv.classify_volatility("wind", 0.02, thresholds),
    }
    assert wv.sigma_from_levels(levels) == pytest.approx(2.667, abs=1e-9)


def test_sigma_floor_and_ceiling():
    normal = {f: wv.VolatilityLevel.NORMAL for f in wv.FACTORS}
    high = {f: wv.VolatilityLevel.HIGH for f in wv.FACTORS}
    assert wv.sigma_from_levels(normal) == 1.0
    assert wv.sigma_from_levels(high) == 3.0


def test_sigma_monotone_in_each_factor():
    order = list(wv.VolatilityLevel)
    for factor in wv.FACTORS:
        previous = 0.0
        for level in order:
            levels = {f: wv.VolatilityLevel.NORMAL for f in wv.FACTORS}
            levels[factor] = level
            sigma = wv.sigma_from_levels(levels)
            assert 1.0 <= sigma <= 3.0
            assert sigma >= previous
            previous = sigma


# --- calibration ------------------------------------------------------------------

def test_calibrate_uniform_quantiles():
    rng = np.random.default_rng(5)
    sample = rng.uniform(0, 1, 10_000)
    thresholds = wv.calibrate_thresholds({f: sample for f in wv.FACTORS})
    cuts = thresholds.cuts["temperature"]
    assert cuts.low_cut == pytest.approx(0.60, abs=0.02)
    assert cuts.med_cut == pytest.approx(0.85, abs=0.02)
    assert cuts.high_cut == pytest.approx(0.95, abs=0.02)


def test_calibrate_matches_reference_temperature_band():
    # piecewise-linear quantile function through the reference temperature cuts
    rng = np.random.default_rng(11)
    u = rng.uniform(0, 1, 20_000)
    knots_p = np.array([0.0, 0.60, 0.85, 0.95, 1.0])
    knots_v = np.array([0.0, 0.0019, 0.0030, 0.0058, 0.02])
    sample = np.interp(u, knots_p, knots_v)
    thresholds = wv.calibrate_thresholds({f: sample for f in wv.FACTORS})
    cuts = thresholds.cuts["temperature"]
    assert cuts.low_cut == pytest.approx(0.0019, rel=0.05)
    assert cuts.med_cut == pytest.approx(0.0030, rel=0.05)
    assert cuts.high_cut == pytest.approx(0.0058, rel=0.05)


def test_calibrate_normal_share():
    rng = np.random.default_rng(13)
    sample = rng.uniform(0, 1, 5000)
    thresholds = wv.calibrate_thresholds({f: sample for f in wv.FACTORS})
    share = np.mean(sample < thresholds.cuts["wind"].low_cut)
    assert share == pytest.approx(0.60, abs=1.0 / np.sqrt(sample.size))


def test_calibrate_degenerate_and_insufficient():
    with pytest.raises(CalibrationDegenerate):
        wv.calibrate_thresholds({f: np.full(200, 0.5) for f in wv.FACTORS})
    with pytest.raises(InsufficientData):
        wv.calibrate_thresholds({f: np.linspace(0, 1, 50) for f in wv.FACTORS})


def test_thresholds_json_round_trip():
    thresholds = wv.default_thresholds()
    again = wv.VolatilityThresholds.from_json(thresholds.to_json())
    assert again == thresholds


# --- correlation --------------------------------------------------------------------

def test_pearson_perfect_lines():
    x = np.arange(10.0)
    r, p = wv.pearson_correlation(x, 2 * x + 1)
    assert r == pytest.approx(1.0, abs=1e-12)
    assert p == 0.0
    r, _ = wv.pearson_correlation(x, -x)
    assert r == pytest.approx(-1.0, abs=1e-12)


def test_pearson_matches_scipy():
    rng = np.random.default_rng(17)
    x = rng.normal(size=50)
    y = 0.4 * x + rng.normal(size=50)
    r, p = wv.pearson_correlation(x, y)
    expected = stats.pearsonr(x, y)
    assert r == pytest.approx(expected.statistic, abs=1e-10)
    assert p == pytest.approx(expected.pvalue, abs=1e-8)


def test_pearson_symmetry_and_affine_invariance():
    rng = np.random.default_rng(19)
    x = rng.normal(size=40)
    y = rng.normal(size=40)
    r_xy, _ = wv.pearson_correlation(x, y)
    r_yx, _ = wv.pearson_correlation(y, x)
    r_affine, _ = wv.pearson_correlation(3.0 * x + 7.0, y)
    assert r_xy == pytest.approx(r_yx, abs=1e-12)
    assert r_xy == pytest.approx(r_affine, abs=1e-10)


def test_pearson_errors():
    with pytest.raises(LengthMismatch):
        wv.pearson_correlation([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(LengthMismatch):
        wv.pearson_correlation([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ZeroVariance):
        wv.pearson_correlation([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# --- spike histogram ----------------------------------------------------------------

def _price_series(values, start="2021-03-01T00:00:00"):
    first = datetime.fromisoformat(start)
    stamps = tuple(first + timedelta(minutes=30 * k) for k in range(len(values)))
    return di.PriceSeries(stamps, values)


def test_spike_histogram_empty():
    series = _price_series(np.full(96, 100.0))
    assert wv.spike_histogram(series).sum() == 0


def test_spike_histogram_single_spike_at_1400():
    values = np.full(48, 100.0)
    values[28] = 420.0  # 14:00
    counts = wv.spike_histogram(_price_series(values))
    assert counts[28] == 1
    assert counts.sum() == 1


def test_spike_histogram_afternoon_only_fixture():
    rng = np.random.default_rng(23)
    values = np.full(48 * 30, 80.0)
    for day in range(30):
        if rng.random() < 0.5:
            slot = int(rng.integers(24, 39))
            values[day * 48 + slot] = 400.0
    counts = wv.spike_histogram(_price_series(values))
    assert counts.sum() > 0
    assert counts[:24].sum() == 0
    assert counts[39:].sum() == 0


def test_spike_threshold_is_inclusive():
    values = np.full(48, 100.0)
    values[30] = 350.0
    assert wv.spike_histogram(_price_series(values))[30] == 1
