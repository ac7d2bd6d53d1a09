"""Shared fixtures: the synthetic toy corpus and trained models.

``trained_toy`` is the expensive desk-scale fixture (hidden=16, latent=8,
~2.5 min of training); it backs the acceptance suite and the slow model
properties. ``mini_model`` is a seconds-scale trained model for contract
tests that only need valid training flags.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from priceband import ctsgan, data_ingest, synthetic
from priceband import weather_volatility as wv

TOY_CORPUS_DAYS = 120
TOY_CORPUS_SEED = 11
TOY_MODEL_SEED = 7

FACTOR_CHANNELS = {
    "temperature": "temperature",
    "irradiance": "irradiance",
    "wind": "wind_speed",
}


@pytest.fixture(scope="session")
def toy_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "toy.csv"
    synthetic.generate_market_csv(path, days=TOY_CORPUS_DAYS, seed=TOY_CORPUS_SEED)
    return path


@pytest.fixture(scope="session")
def toy_dataset(toy_csv):
    return data_ingest.load_dataset(toy_csv)


def factor_variances(dataset, rec):
    return {
        factor: wv.window_variance(
            dataset.normalized_channel(rec, channel), wv.FACTOR_WINDOWS[factor]
        )
        for factor, channel in FACTOR_CHANNELS.items()
    }


@pytest.fixture(scope="session")
def toy_thresholds(toy_dataset):
    samples = {factor: [] for factor in wv.FACTORS}
    for rec in toy_dataset.day_records:
        for factor, value in factor_variances(toy_dataset, rec).items():
            samples[factor].append(value)
    return wv.calibrate_thresholds({f: np.asarray(v) for f, v in samples.items()})


@pytest.fixture(scope="session")
def mini_model(toy_dataset):
    """Fully flagged model at throwaway scale (contract tests only)."""
    days = toy_dataset.days[:20]
    model = ctsgan.build_model(
        condition_dim=days[0][0].dim, hidden_dim=6, latent_dim=4, seed=3
    )
    cfg = ctsgan.TrainingConfig(iterations_per_phase=40, seed=3, learning_rate=0.05)
    ctsgan.train_phase1_autoencoder(model, days, cfg)
    ctsgan.train_phase2_supervised(model, days, cfg)
    ctsgan.train_phase3_joint(model, days, cfg)
    return model


@pytest.fixture(scope="session")
def trained_toy(toy_dataset):
    """Desk-scale training run shared by the acceptance criteria.

    Trains on the first 80 condition/target pairs; the pairs targeting day
    records 96..115 are held out as the 20 evaluation days.
    """
    train_days = toy_dataset.days[:80]
    model = ctsgan.build_model(
        condition_dim=train_days[0][0].dim,
        hidden_dim=16,
        latent_dim=8,
        seed=TOY_MODEL_SEED,
    )

    started = time.monotonic()
    mse_before = ctsgan.reconstruction_mse(model, train_days)
    ctsgan.train_phase1_autoencoder(
        model,
        train_days,
        ctsgan.TrainingConfig(iterations_per_phase=12000, seed=TOY_MODEL_SEED, learning_rate=0.05),
    )
    mse_after = ctsgan.reconstruction_mse(model, train_days)

    sup_before = ctsgan.supervised_mse(model, train_days)
    ctsgan.train_phase2_supervised(
        model,
        train_days,
        ctsgan.TrainingConfig(iterations_per_phase=6000, seed=TOY_MODEL_SEED, learning_rate=0.05),
    )
    sup_after = ctsgan.supervised_mse(model, train_days)

    ctsgan.train_phase3_joint(
        model,
        train_days,
        ctsgan.TrainingConfig(iterations_per_phase=2000, seed=TOY_MODEL_SEED, learning_rate=0.05),
    )
    elapsed = time.monotonic() - started

    return {
        "model": model,
        "train_days": train_days,
        "test_days": toy_dataset.days[95:115],
        "test_records": toy_dataset.day_records[96:116],
        "mse_before": mse_before,
        "mse_after": mse_after,
        "sup_before": sup_before,
        "sup_after": sup_after,
        "train_seconds": elapsed,
    }
