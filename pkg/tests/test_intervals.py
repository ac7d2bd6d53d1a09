import numpy as np
import pytest

from priceband import ctsgan
from priceband import intervals as iv
from priceband import weather_volatility as wv
from priceband.errors import ConditionMismatch, EmptySet, TooFewScenarios

HORIZON = 48


def make_set(matrix, sigma=1.0, cid="c0", provenance=None):
    return iv.ScenarioSet(
        scenarios=np.asarray(matrix, dtype=float),
        condition_id=cid,
        noise_sigma=sigma,
        provenance=provenance,
    )


def ar1_paths(count, phi=0.8, mean=0.5, stat_std=0.08, steps=HORIZON, seed=0):
    """Stationary Gaussian AR(1), mapped well inside [0, 1]."""
    rng = np.random.default_rng(seed)
    innov_std = stat_std * np.sqrt(1.0 - phi * phi)
    paths = np.empty((count, steps))
    paths[:, 0] = rng.normal(mean, stat_std, count)
    for t in range(1, steps):
        paths[:, t] = mean + phi * (paths[:, t - 1] - mean) + rng.normal(0, innov_std, count)
    return np.clip(paths, 0.0, 1.0)


# --- density stacking -----------------------------------------------------------

def test_point_mass_density():
    grid = iv.stack_density(make_set(np.full((20, HORIZON), 0.5)), bins=10)
    assert grid.mass.shape == (HORIZON, 10)
    assert (grid.mass[:, 5] == 1.0).all()
    assert grid.mass.sum() == HORIZON


def test_single_scenario_one_hot_rows():
    rng = np.random.default_rng(1)
    grid = iv.stack_density(make_set(rng.uniform(0, 1, (1, HORIZON))), bins=25)
    assert ((grid.mass == 0.0) | (grid.mass == 1.0)).all()
    assert np.array_equal(grid.mass.sum(axis=1), np.ones(HORIZON))


def test_uniform_scenarios_binomial_tolerance():
    rng = np.random.default_rng(2)
    count, bins = 100_000, 10
    grid = iv.stack_density(make_set(rng.uniform(0, 1, (count, HORIZON))), bins=bins)
    tolerance = 3.0 * np.sqrt(0.1 * 0.9 / count)
    assert np.abs(grid.mass - 1.0 / bins).max() <= tolerance


def test_density_rejects_empty_and_bad_bins():
    with pytest.raises(EmptySet):
        iv.stack_density(make_set(np.empty((0, HORIZON))), bins=10)
    with pytest.raises(EmptySet):
        iv.stack_density(make_set(np.full((3, HORIZON), 0.5)), bins=1)


def test_boundary_value_lands_in_last_bin():
    grid = iv.stack_density(make_set(np.ones((4, HORIZON))), bins=10)
    assert (grid.mass[:, -1] == 1.0).all()


# --- interval construction ---------------------------------------------------------

def test_interval_matches_hand_computed_order_statistics():
    ladder = np.tile(np.linspace(0.1, 1.0, 10)[:, None], (1, HORIZON))
    interval = iv.build_interval(make_set(ladder), nominal=0.8)
    # quantile 0.1 of {0.1..1.0}: position 0.9 between 0.1 and 0.2 -> 0.19
    assert np.allclose(interval.lower, 0.19, atol=1e-12)
    assert np.allclose(interval.upper, 0.91, atol=1e-12)


def test_interval_too_few_scenarios():
    ladder = np.tile(np.linspace(0.1, 0.9, 9)[:, None], (1, HORIZON))
    with pytest.raises(TooFewScenarios):
        iv.build_interval(make_set(ladder), nominal=0.8)  # needs ceil(2/0.2) = 10


def test_interval_zero_width_on_identical_scenarios():
    interval = iv.build_interval(make_set(np.full((50, HORIZON), 0.3)), nominal=0.9)
    assert np.array_equal(interval.lower, interval.upper)
    assert (interval.widths == 0.0).all()


def test_interval_approaches_envelope_as_nominal_grows():
    rng = np.random.default_rng(3)
    scenarios = make_set(rng.uniform(0.2, 0.8, (5000, HORIZON)))
    near_one = iv.build_interval(scenarios, nominal=0.9995)
    envelope = iv.build_interval(scenarios, nominal=0.9995, mode="envelope")
    assert np.abs(near_one.lower - envelope.lower).max() < 0.01
    assert np.abs(near_one.upper - envelope.upper).max() < 0.01
    assert (envelope.lower == scenarios.scenarios.min(axis=0)).all()


def test_interval_nested_in_nominal():
    rng = np.random.default_rng(4)
    scenarios = make_set(rng.normal(0.5, 0.1, (400, HORIZON)).clip(0, 1))
    narrow = iv.build_interval(scenarios, nominal=0.6)
    wide = iv.build_interval(scenarios, nominal=0.9)
    assert (wide.lower <= narrow.lower + 1e-12).all()
    assert (wide.upper >= narrow.upper - 1e-12).all()


def test_density_interval_consistency():
    rng = np.random.default_rng(5)
    count, bins, nominal = 500, 50, 0.9
    scenarios = make_set(rng.beta(2, 3, (count, HORIZON)))
    interval = iv.build_interval(scenarios, nominal)
    grid = iv.stack_density(scenarios, bins)
    edges = grid.bin_edges
    for t in range(HORIZON):
        inside = (edges[:-1] >= interval.lower[t] - 1.0 / bins) & (
            edges[1:] <= interval.upper[t] + 1.0 / bins
        )
        mass_inside = grid.mass[t][inside].sum()
        assert mass_inside >= nominal - 2.0 / bins - 2.0 / count


# --- combination ---------------------------------------------------------------------

def test_combine_with_empty_volatile_is_identity():
    normal = make_set(np.full((5, HORIZON), 0.4))
    empty = make_set(np.empty((0, HORIZON)), sigma=2.0, provenance=np.empty(0, dtype=object))
    combined = iv.combine_normal_volatile(normal, empty)
    assert combined is normal


def test_combine_counts_and_provenance():
    rng = np.random.default_rng(6)
    normal = make_set(rng.uniform(0.3, 0.5, (500, HORIZON)), sigma=1.0)
    volatile = make_set(rng.uniform(0.2, 0.8, (500, HORIZON)), sigma=2.667)
    combined = iv.combine_normal_volatile(normal, volatile)
    assert combined.count == 1000
    assert set(combined.provenance) == {iv.NORMAL_TAG, iv.VOLATILE_TAG}
    assert combined.noise_sigma == 2.667


def test_combine_condition_mismatch():
    a = make_set(np.full((3, HORIZON), 0.4), cid="a")
    b = make_set(np.full((3, HORIZON), 0.5), cid="b", sigma=2.0)
    with pytest.raises(ConditionMismatch):
        iv.combine_normal_volatile(a, b)


def test_combine_order_insensitive_interval():
    rng = np.random.default_rng(7)
    a = make_set(rng.uniform(0.3, 0.5, (40, HORIZON)), sigma=1.0)
    b = make_set(rng.uniform(0.2, 0.8, (40, HORIZON)), sigma=2.0)
    ab = iv.build_interval(iv.combine_normal_volatile(a, b), 0.9)
    ba = iv.build_interval(iv.combine_normal_volatile(b, a), 0.9)
    assert np.array_equal(ab.lower, ba.lower)
    assert np.array_equal(ab.upper, ba.upper)


# --- coverage oracle (independent of the generative model) ----------------------------

def test_ar1_coverage_oracle():
    scenarios = make_set(ar1_paths(4000, seed=8))
    interval = iv.build_interval(scenarios, nominal=0.90)
    fresh = ar1_paths(1000, seed=9)
    covered = (fresh >= interval.lower) & (fresh <= interval.upper)
    assert covered.mean() == pytest.approx(0.90, abs=0.03)


# --- pipeline --------------------------------------------------------------------------

def test_pipeline_calm_day_stays_baseline(mini_model, toy_dataset):
    condition = toy_dataset.days[0][0]
    calm = {"temperature": 0.0001, "irradiance": 0.001, "wind": 0.0001}
    interval, density, combined = iv.predict_pipeline(
        mini_model, condition, calm, wv.default_thresholds(), 40, 0.9, seed=11
    )
    assert combined.noise_sigma == 1.0
    assert combined.count == 40
    assert set(combined.provenance) == {iv.NORMAL_TAG}
    assert np.allclose(density.mass.sum(axis=1), 1.0, atol=1e-9)


def test_pipeline_worked_example_triggers_reinforcement(mini_model, toy_dataset):
    condition = toy_dataset.days[0][0]
    worked = {"temperature": 0.004, "irradiance": 0.07, "wind": 0.02}
    interval, density, combined = iv.predict_pipeline(
        mini_model, condition, worked, wv.default_thresholds(), 40, 0.9, seed=12
    )
    assert combined.noise_sigma == pytest.approx(2.667, abs=1e-9)
    assert combined.count == 80
    assert set(combined.provenance) == {iv.NORMAL_TAG, iv.VOLATILE_TAG}
    assert (interval.lower <= interval.upper).all()
    assert np.allclose(density.mass.sum(axis=1), 1.0, atol=1e-9)


def test_pipeline_deterministic(mini_model, toy_dataset):
    condition = toy_dataset.days[0][0]
    worked = {"temperature": 0.004, "irradiance": 0.07, "wind": 0.02}
    a = iv.predict_pipeline(mini_model, condition, worked, wv.default_thresholds(), 20, 0.9, seed=13)
    b = iv.predict_pipeline(mini_model, condition, worked, wv.default_thresholds(), 20, 0.9, seed=13)
    assert np.array_equal(a[0].lower, b[0].lower)
    assert np.array_equal(a[2].scenarios, b[2].scenarios)


def test_combined_interval_contains_baseline_on_afternoon(trained_toy, toy_thresholds):
    """Reinforced union widens (or matches) the baseline interval across
    nearly all afternoon timesteps."""
    model = trained_toy["model"]
    afternoon = wv.AFTERNOON_WINDOW
    fractions = []
    for day_index in (2, 8, 9):  # reinforced test days
        condition = trained_toy["test_days"][day_index][0]
        normal = ctsgan.generate_scenarios(
            model, condition, ctsgan.NoiseSpec(1.0, 48, model.latent_dim), 300, seed=41
        )
        volatile = ctsgan.generate_scenarios(
            model, condition, ctsgan.NoiseSpec(2.0, 48, model.latent_dim), 300, seed=42
        )
        base = iv.build_interval(normal, 0.9)
        merged = iv.build_interval(iv.combine_normal_volatile(normal, volatile), 0.9)
        idx = np.fromiter(afternoon, dtype=int)
        contains = (merged.lower[idx] <= base.lower[idx] + 1e-12) & (
            merged.upper[idx] >= base.upper[idx] - 1e-12
        )
        fractions.append(contains.mean())
    assert np.mean(fractions) >= 0.9
