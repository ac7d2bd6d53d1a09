"""Conditional time-series GAN over normalized price paths.

Four LSTM networks share one latent space: the embedder maps price paths into
it, the recovery maps back out, the generator maps (noise, condition) into it,
and the discriminator scores (latent, condition) sequences. Training runs in
three phases: autoencoding, supervised next-step prediction in latent space
(through the generator itself, teacher-forced on real latents), and joint
adversarial training with a weight-clipped critic.

The generator and discriminator see *calibrated* latents: at the end of phase
1 the per-dimension mean and std of the embedder's latents are frozen into
the model and used to whiten that space. Autoencoders otherwise settle on an
arbitrarily small latent scale, which would leave the N(0, sigma) noise input
orders of magnitude off-scale and starve the adversarial phase of signal.
Generation de-whitens before the recovery network.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptCheckpoint,
    DimensionMismatch,
    DivergedLoss,
    InvalidSigma,
    PhaseOrderViolation,
    UntrainedModel,
    VersionMismatch,
)
from .intervals import NORMAL_TAG, VOLATILE_TAG, ScenarioSet
from .seeding import derive_seed
from .seqnet import (
    LayerSpec,
    NetworkParams,
    OptimizerState,
    backward,
    init_params,
    params_from_payload,
    params_to_payload,
    rnn_forward,
    sgd_step,
)

MODEL_FORMAT_VERSION = 1

_ROLES = ("embedder", "recovery", "generator", "discriminator")

_PHASES = ("phase1", "phase2", "phase3")


@dataclass
class TrainingConfig:
    """Knobs for all three phases; one seed fixes the whole run."""

    batch_size: int = 7
    iterations_per_phase: int = 10000
    learning_rate: float = 0.02
    clip_limit: float = 0.5
    seed: int = 0
    supervised_weight: float = 10.0
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size <= 0:
            raise DimensionMismatch("batch_size must be positive")
        if self.iterations_per_phase < 0:
            raise DimensionMismatch("iterations_per_phase must be >= 0")
        if self.learning_rate <= 0 or self.clip_limit <= 0:
            raise DimensionMismatch("learning_rate and clip_limit must be positive")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise DimensionMismatch("holdout_fraction must be in [0, 1)")


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise for the generator: mean 0, std >= 1, one draw per
    timestep and latent dimension."""

    std: float = 1.0
    length: int = 48
    dim: int = 100
    mean: float = 0.0

    def __post_init__(self):
        if self.mean != 0.0:
            raise InvalidSigma("noise mean is fixed at 0")
        if self.std < 1.0:
            raise InvalidSigma(f"noise std must be >= 1, got {self.std}")
        if self.length <= 0 or self.dim <= 0:
            raise InvalidSigma("noise length and dim must be positive")


@dataclass
class CTSGANModel:
    """The four-network parameter bundle plus training bookkeeping.

    ``latent_shift``/``latent_scale`` hold the whitening affine fixed at the
    end of phase 1 (identity until then).
    """

    embedder: NetworkParams
    recovery: NetworkParams
    generator: NetworkParams
    discriminator: NetworkParams
    latent_dim: int
    condition_dim: int
    data_dim: int = 1
    hidden_dim: int = 100
    data_horizon: int = 48
    latent_shift: np.ndarray | None = None
    latent_scale: np.ndarray | None = None
    latent_autocorr: float = 0.0
    training_flags: dict = field(
        default_factory=lambda: {p: False for p in _PHASES}
    )
    training_log: list = field(default_factory=list)
    adversarial_report: dict | None = None

    def __post_init__(self):
        checks = (
            (self.embedder.input_dim, self.data_dim, "embedder input"),
            (self.embedder.output_dim, self.latent_dim, "embedder output"),
            (self.recovery.input_dim, self.latent_dim, "recovery input"),
            (self.recovery.output_dim, self.data_dim, "recovery output"),
            (self.generator.input_dim, self.latent_dim + self.condition_dim, "generator input"),
            (self.generator.output_dim, self.latent_dim, "generator output"),
            (self.discriminator.input_dim, self.latent_dim + self.condition_dim, "discriminator input"),
            (self.discriminator.output_dim, 1, "discriminator output"),
        )
        for actual, expected, what in checks:
            if actual != expected:
                raise DimensionMismatch(f"{what} dim {actual} != {expected}")

    @property
    def is_trained(self) -> bool:
        return all(self.training_flags.get(p, False) for p in _PHASES)


def build_model(
    condition_dim: int,
    data_dim: int = 1,
    hidden_dim: int = 100,
    latent_dim: int = 100,
    data_horizon: int = 48,
    seed: int = 0,
    latent_dispersion_gain: float = 8.0,
) -> CTSGANModel:
    """Fresh model with Glorot-initialized networks, seeds derived per role.

    The embedder's output head is scaled by ``latent_dispersion_gain`` so the
    initial latent code spreads across the sigmoid's range instead of
    clustering at 0.5. Plain SGD keeps whatever code scale it starts from, and
    a near-collapsed code leaves the downstream whitening ill-conditioned.
    """

    def net(role: str, in_dim: int, out_dim: int, activation: str) -> NetworkParams:
        specs = (
            LayerSpec("lstm", in_dim, hidden_dim),
            LayerSpec("dense", hidden_dim, out_dim, activation),
        )
        return init_params(derive_seed(seed, f"init-{role}"), specs)

    embedder = net("embedder", data_dim, latent_dim, "sigmoid")
    embedder.tensors[-1]["w"] *= latent_dispersion_gain
    embedder.version += 1

    return CTSGANModel(
        embedder=embedder,
        recovery=net("recovery", latent_dim, data_dim, "sigmoid"),
        generator=net("generator", latent_dim + condition_dim, latent_dim, "linear"),
        discriminator=net("discriminator", latent_dim + condition_dim, 1, "linear"),
        latent_dim=latent_dim,
        condition_dim=condition_dim,
        data_dim=data_dim,
        hidden_dim=hidden_dim,
        data_horizon=data_horizon,
    )


def _condition_array(condition) -> np.ndarray:
    arr = condition.as_array() if hasattr(condition, "as_array") else condition
    return np.asarray(arr, dtype=np.float64)


def _prepare_days(model: CTSGANModel, days) -> tuple[np.ndarray, np.ndarray]:
    """Stack (condition, target) pairs into [N, cond_dim] and [T, N, 1]."""
    if not days:
        raise DimensionMismatch("training needs at least one day")
    conds = np.stack([_condition_array(c) for c, _ in days])
    if conds.shape[1] != model.condition_dim:
        raise DimensionMismatch(
            f"condition dim {conds.shape[1]} != model condition dim {model.condition_dim}"
        )
    targets = np.stack([np.asarray(t, dtype=np.float64) for _, t in days], axis=1)
    if targets.ndim != 2 or targets.shape[0] != model.data_horizon:
        raise DimensionMismatch(
            f"targets must be {model.data_horizon}-step paths, got shape {targets.shape}"
        )
    if not (np.isfinite(conds).all() and np.isfinite(targets).all()):
        raise DimensionMismatch("non-finite values in training data")
    return conds, targets[:, :, None]


def _train_holdout_split(n: int, config: TrainingConfig) -> tuple[np.ndarray, np.ndarray]:
    n_hold = int(round(config.holdout_fraction * n))
    if n_hold >= n:
        n_hold = 0
    split = n - n_hold
    return np.arange(split), np.arange(split, n)


def _tile_condition(conds: np.ndarray, steps: int) -> np.ndarray:
    return np.broadcast_to(conds, (steps,) + conds.shape)


_MIN_LATENT_SCALE = 1e-3


def _calibrate_latent_space(model: CTSGANModel, latents: np.ndarray) -> None:
    """Freeze the whitening affine and the lag-1 autocorrelation of the
    phase-1 latents ([T, N, latent])."""
    model.latent_shift = latents.mean(axis=(0, 1))
    model.latent_scale = np.maximum(latents.std(axis=(0, 1)), _MIN_LATENT_SCALE)
    white = (latents - model.latent_shift) / model.latent_scale
    a = white[:-1].reshape(-1, white.shape[2])
    b = white[1:].reshape(-1, white.shape[2])
    ac = (a * b).mean(axis=0) / np.maximum(a.std(axis=0) * b.std(axis=0), 1e-12)
    model.latent_autocorr = float(np.clip(np.mean(ac), 0.0, 0.99))


def _shape_noise(eps: np.ndarray, autocorr: float) -> np.ndarray:
    """Turn i.i.d. per-timestep draws into an AR(1) sequence with the latent
    process's autocorrelation; marginals keep the original mean and std.

    Temporally white input noise gets integrated away by the recurrent
    decoder, leaving near-deterministic scenarios; correlated noise produces
    the sustained excursions that scenario diversity requires.
    """
    if autocorr <= 0.0:
        return eps
    shaped = np.empty_like(eps)
    shaped[0] = eps[0]
    innovation = np.sqrt(1.0 - autocorr * autocorr)
    for t in range(1, eps.shape[0]):
        shaped[t] = autocorr * shaped[t - 1] + innovation * eps[t]
    return shaped


def _whiten(model: CTSGANModel, latents: np.ndarray) -> np.ndarray:
    if model.latent_shift is None:
        return latents
    return (latents - model.latent_shift) / model.latent_scale


def _dewhiten(model: CTSGANModel, calibrated: np.ndarray) -> np.ndarray:
    if model.latent_shift is None:
        return calibrated
    return calibrated * model.latent_scale + model.latent_shift


def _check_finite_loss(loss: float, phase: str) -> None:
    if not np.isfinite(loss):
        raise DivergedLoss(f"{phase} loss diverged to {loss}")


def train_phase1_autoencoder(model: CTSGANModel, days, config: TrainingConfig) -> CTSGANModel:
    """Embedder + recovery minimize reconstruction MSE of normalized paths."""
    conds, targets = _prepare_days(model, days)
    train_idx, _ = _train_holdout_split(conds.shape[0], config)
    rng = np.random.default_rng(derive_seed(config.seed, "phase1"))
    opt_e = OptimizerState(config.learning_rate, config.clip_limit)
    opt_r = OptimizerState(config.learning_rate, config.clip_limit)

    for it in range(config.iterations_per_phase):
        batch = rng.choice(train_idx, size=config.batch_size)
        x = targets[:, batch, :]
        latents, cache_e = rnn_forward(model.embedder, x)
        recon, cache_r = rnn_forward(model.recovery, latents)
        diff = recon - x
        loss = float(np.mean(diff * diff))
        _check_finite_loss(loss, "phase1")
        g_r, d_latents = backward(cache_r, 2.0 * diff / diff.size)
        g_e, _ = backward(cache_e, d_latents)
        sgd_step(model.recovery, g_r, opt_r)
        sgd_step(model.embedder, g_e, opt_e)
        model.training_log.append({"phase": 1, "iteration": it, "loss": loss})

    all_latents, _ = rnn_forward(model.embedder, targets[:, train_idx, :])
    _calibrate_latent_space(model, all_latents)
    model.training_flags["phase1"] = True
    return model


def train_phase2_supervised(model: CTSGANModel, days, config: TrainingConfig) -> CTSGANModel:
    """Generator learns next-step latent prediction, teacher-forced on the
    embedder's latents concatenated with the condition."""
    if not model.training_flags["phase1"]:
        raise PhaseOrderViolation("phase 2 requires a trained embedder (run phase 1)")
    conds, targets = _prepare_days(model, days)
    train_idx, _ = _train_holdout_split(conds.shape[0], config)
    rng = np.random.default_rng(derive_seed(config.seed, "phase2"))
    opt_g = OptimizerState(config.learning_rate, config.clip_limit)
    steps = model.data_horizon

    for it in range(config.iterations_per_phase):
        batch = rng.choice(train_idx, size=config.batch_size)
        x = targets[:, batch, :]
        cond_seq = _tile_condition(conds[batch], steps - 1)
        raw_latents, _ = rnn_forward(model.embedder, x)
        latents = _whiten(model, raw_latents)
        gen_in = np.concatenate([latents[:-1], cond_seq], axis=2)
        predicted, cache_g = rnn_forward(model.generator, gen_in)
        diff = predicted - latents[1:]
        loss = float(np.mean(diff * diff))
        _check_finite_loss(loss, "phase2")
        g_g, _ = backward(cache_g, 2.0 * diff / diff.size)
        sgd_step(model.generator, g_g, opt_g)
        model.training_log.append({"phase": 2, "iteration": it, "loss": loss})

    model.training_flags["phase2"] = True
    return model


def train_phase3_joint(model: CTSGANModel, days, config: TrainingConfig) -> CTSGANModel:
    """Alternating critic/generator updates plus an autoencoder refresh.

    The critic maximizes the mean score gap between real and generated
    (latent, condition) sequences and is weight-clipped after every step; the
    generator minimizes the negative critic score plus the supervised latent
    loss (weighted ``supervised_weight``:1). Embedder and recovery keep
    fine-tuning on reconstruction. Critic scores on held-out real days and
    fresh generated days are logged at the end.
    """
    if not (model.training_flags["phase1"] and model.training_flags["phase2"]):
        raise PhaseOrderViolation("phase 3 requires phases 1 and 2 first")
    conds, targets = _prepare_days(model, days)
    train_idx, hold_idx = _train_holdout_split(conds.shape[0], config)
    rng = np.random.default_rng(derive_seed(config.seed, "phase3"))
    opts = {
        role: OptimizerState(config.learning_rate, config.clip_limit)
        for role in _ROLES
    }
    steps = model.data_horizon
    lam = config.supervised_weight

    for it in range(config.iterations_per_phase):
        batch = rng.choice(train_idx, size=config.batch_size)
        x = targets[:, batch, :]
        cond_seq = _tile_condition(conds[batch], steps)

        # critic step: real vs generated latents, clip weights afterwards
        raw_real, _ = rnn_forward(model.embedder, x)
        latents_real = _whiten(model, raw_real)
        noise = _shape_noise(
            rng.normal(0.0, 1.0, size=(steps, config.batch_size, model.latent_dim)),
            model.latent_autocorr,
        )
        latents_fake, _ = rnn_forward(
            model.generator, np.concatenate([noise, cond_seq], axis=2)
        )
        score_real, cache_dr = rnn_forward(
            model.discriminator, np.concatenate([latents_real, cond_seq], axis=2)
        )
        score_fake, cache_df = rnn_forward(
            model.discriminator, np.concatenate([latents_fake, cond_seq], axis=2)
        )
        d_loss = float(np.mean(score_fake) - np.mean(score_real))
        _check_finite_loss(d_loss, "phase3 critic")
        g_df, _ = backward(cache_df, np.full(score_fake.shape, 1.0 / score_fake.size))
        g_dr, _ = backward(cache_dr, np.full(score_real.shape, -1.0 / score_real.size))
        sgd_step(model.discriminator, g_df + g_dr, opts["discriminator"], clip=True)

        # generator step: adversarial + supervised
        noise = _shape_noise(
            rng.normal(0.0, 1.0, size=(steps, config.batch_size, model.latent_dim)),
            model.latent_autocorr,
        )
        fake_latents, cache_g = rnn_forward(
            model.generator, np.concatenate([noise, cond_seq], axis=2)
        )
        score, cache_d = rnn_forward(
            model.discriminator, np.concatenate([fake_latents, cond_seq], axis=2)
        )
        adv_loss = float(-np.mean(score))
        _, d_disc_in = backward(cache_d, np.full(score.shape, -1.0 / score.size))
        g_adv, _ = backward(cache_g, d_disc_in[:, :, : model.latent_dim])

        sup_in = np.concatenate([latents_real[:-1], cond_seq[: steps - 1]], axis=2)
        predicted, cache_s = rnn_forward(model.generator, sup_in)
        sup_diff = predicted - latents_real[1:]
        sup_loss = float(np.mean(sup_diff * sup_diff))
        g_sup, _ = backward(cache_s, 2.0 * lam * sup_diff / sup_diff.size)
        loss = lam * sup_loss + adv_loss
        _check_finite_loss(loss, "phase3 generator")
        sgd_step(model.generator, g_adv + g_sup, opts["generator"])

        # autoencoder refresh
        latents, cache_e = rnn_forward(model.embedder, x)
        recon, cache_r = rnn_forward(model.recovery, latents)
        rdiff = recon - x
        recon_loss = float(np.mean(rdiff * rdiff))
        _check_finite_loss(recon_loss, "phase3 reconstruction")
        g_r, d_latents = backward(cache_r, 2.0 * rdiff / rdiff.size)
        g_e, _ = backward(cache_e, d_latents)
        sgd_step(model.recovery, g_r, opts["recovery"])
        sgd_step(model.embedder, g_e, opts["embedder"])

        model.training_log.append(
            {"phase": 3, "iteration": it, "loss": loss, "d_loss": d_loss}
        )

    model.training_flags["phase3"] = True
    score_idx = hold_idx if hold_idx.size else train_idx
    model.adversarial_report = _score_real_vs_generated(
        model, conds, targets, score_idx, derive_seed(config.seed, "phase3-report")
    )
    return model


def _score_real_vs_generated(
    model: CTSGANModel, conds, targets, idx, seed: int
) -> dict:
    """Critic scores on real vs freshly generated latents plus a separation
    accuracy (midpoint threshold); near 0.5 means the critic cannot tell."""
    rng = np.random.default_rng(seed)
    steps = model.data_horizon
    x = targets[:, idx, :]
    cond_seq = _tile_condition(conds[idx], steps)
    raw_real, _ = rnn_forward(model.embedder, x)
    latents_real = _whiten(model, raw_real)
    noise = _shape_noise(
        rng.normal(0.0, 1.0, size=(steps, idx.size, model.latent_dim)),
        model.latent_autocorr,
    )
    latents_fake, _ = rnn_forward(
        model.generator, np.concatenate([noise, cond_seq], axis=2)
    )
    score_real, _ = rnn_forward(
        model.discriminator, np.concatenate([latents_real, cond_seq], axis=2)
    )
    score_fake, _ = rnn_forward(
        model.discriminator, np.concatenate([latents_fake, cond_seq], axis=2)
    )
    mean_real = float(np.mean(score_real))
    mean_fake = float(np.mean(score_fake))
    threshold = 0.5 * (mean_real + mean_fake)
    accuracy = 0.5 * (
        float(np.mean(score_real > threshold)) + float(np.mean(score_fake <= threshold))
    )
    return {
        "d_score_real": mean_real,
        "d_score_fake": mean_fake,
        "real_vs_fake_accuracy": accuracy,
        "scored_days": int(idx.size),
    }


def sample_noise(spec: NoiseSpec, seed: int) -> np.ndarray:
    """I.i.d. draws from N(0, std^2), shaped [length, dim]."""
    rng = np.random.default_rng(seed)
    return rng.normal(spec.mean, spec.std, size=(spec.length, spec.dim))


def reconstruction_mse(model: CTSGANModel, days) -> float:
    """Autoencoder reconstruction MSE over every supplied day (no batching)."""
    _, targets = _prepare_days(model, days)
    latents, _ = rnn_forward(model.embedder, targets)
    recon, _ = rnn_forward(model.recovery, latents)
    return float(np.mean((recon - targets) ** 2))


def supervised_mse(model: CTSGANModel, days) -> float:
    """Next-step latent prediction MSE over every supplied day."""
    conds, targets = _prepare_days(model, days)
    steps = model.data_horizon
    raw, _ = rnn_forward(model.embedder, targets)
    latents = _whiten(model, raw)
    cond_seq = _tile_condition(conds, steps - 1)
    predicted, _ = rnn_forward(
        model.generator, np.concatenate([latents[:-1], cond_seq], axis=2)
    )
    return float(np.mean((predicted - latents[1:]) ** 2))


def condition_fingerprint(condition) -> str:
    """Short stable tag identifying a condition vector's exact contents."""
    arr = np.ascontiguousarray(_condition_array(condition))
    return hashlib.sha256(arr.tobytes()).hexdigest()[:12]


def generate_scenarios(
    model: CTSGANModel,
    condition,
    spec: NoiseSpec,
    count: int,
    seed: int = 0,
    condition_id: str | None = None,
) -> ScenarioSet:
    """Map ``count`` fresh noise draws through generator and recovery.

    Outputs are clamped to [0, 1]; distinct seeds give distinct paths.
    """
    if not model.is_trained:
        raise UntrainedModel("generation requires all three training phases")
    cond = _condition_array(condition)
    if cond.shape != (model.condition_dim,):
        raise DimensionMismatch(
            f"condition has shape {cond.shape}, model expects ({model.condition_dim},)"
        )
    if spec.dim != model.latent_dim:
        raise DimensionMismatch(
            f"noise dim {spec.dim} != model latent dim {model.latent_dim}"
        )
    if count < 0:
        raise DimensionMismatch("scenario count must be >= 0")
    tag = NORMAL_TAG if spec.std == 1.0 else VOLATILE_TAG
    cid = condition_id if condition_id is not None else condition_fingerprint(cond)
    if count == 0:
        return ScenarioSet(
            scenarios=np.empty((0, spec.length)),
            condition_id=cid,
            noise_sigma=spec.std,
            provenance=np.empty(0, dtype=object),
        )

    rng = np.random.default_rng(seed)
    noise = _shape_noise(
        rng.normal(spec.mean, spec.std, size=(spec.length, count, spec.dim)),
        model.latent_autocorr,
    )
    cond_seq = np.broadcast_to(cond, (spec.length, count, cond.size))
    latents, _ = rnn_forward(model.generator, np.concatenate([noise, cond_seq], axis=2))
    paths, _ = rnn_forward(model.recovery, _dewhiten(model, latents))
    scenarios = np.clip(paths[:, :, 0].T, 0.0, 1.0)
    return ScenarioSet(
        scenarios=scenarios,
        condition_id=cid,
        noise_sigma=spec.std,
        provenance=np.full(count, tag, dtype=object),
    )


def save_model(model: CTSGANModel, path) -> None:
    """Versioned JSON checkpoint; reload reproduces generation bit-exactly."""
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "latent_dim": model.latent_dim,
        "condition_dim": model.condition_dim,
        "data_dim": model.data_dim,
        "hidden_dim": model.hidden_dim,
        "data_horizon": model.data_horizon,
        "latent_shift": None if model.latent_shift is None else model.latent_shift.tolist(),
        "latent_scale": None if model.latent_scale is None else model.latent_scale.tolist(),
        "latent_autocorr": model.latent_autocorr,
        "networks": {
            role: params_to_payload(getattr(model, role)) for role in _ROLES
        },
        "training_flags": model.training_flags,
        "training_log": model.training_log,
        "adversarial_report": model.adversarial_report,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, allow_nan=False)
    os.replace(tmp, path)


def load_model(path) -> CTSGANModel:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"cannot read model checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"model checkpoint format {version!r} != {MODEL_FORMAT_VERSION}; "
            "re-train with this package version or convert the checkpoint"
        )
    try:
        networks = {
            role: params_from_payload(payload["networks"][role]) for role in _ROLES
        }
        shift = payload["latent_shift"]
        scale = payload["latent_scale"]
        model = CTSGANModel(
            embedder=networks["embedder"],
            recovery=networks["recovery"],
            generator=networks["generator"],
            discriminator=networks["discriminator"],
            latent_dim=int(payload["latent_dim"]),
            condition_dim=int(payload["condition_dim"]),
            data_dim=int(payload["data_dim"]),
            hidden_dim=int(payload["hidden_dim"]),
            data_horizon=int(payload["data_horizon"]),
            latent_shift=None if shift is None else np.asarray(shift, dtype=np.float64),
            latent_scale=None if scale is None else np.asarray(scale, dtype=np.float64),
            latent_autocorr=float(payload["latent_autocorr"]),
            training_flags=dict(payload["training_flags"]),
            training_log=list(payload["training_log"]),
            adversarial_report=payload.get("adversarial_report"),
        )
    except (KeyError, TypeError, ValueError, DimensionMismatch) as exc:
        raise CorruptCheckpoint(f"bad model checkpoint structure: {exc}") from exc
    return model
