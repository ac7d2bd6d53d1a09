"""Minimal differentiable sequence networks: LSTM cells, dense heads, exact
reverse-mode gradients, SGD with weight clamping, and a finite-difference
gradient checker.

Everything is float64 numpy. A network is an ordered list of layer blocks
(LSTM cells followed by dense heads); the same forward/backward pair serves
all four networks of the generative model. Inputs are ``[T, input_dim]`` for a
single sequence or ``[T, batch, input_dim]`` for a batch.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import (
    CorruptCheckpoint,
    InvalidDims,
    NonFiniteLoss,
    ShapeMismatch,
    StaleCache,
    VersionMismatch,
)

CHECKPOINT_FORMAT_VERSION = 1

_ACTIVATIONS = ("linear", "sigmoid")

# Gate packing order inside the fused LSTM weight matrix: input, forget,
# candidate, output. The forget slice is [H:2H]; its bias starts at 1.0.
_GATES = 4


@dataclass(frozen=True)
class LayerSpec:
    """One layer block: ``kind`` is "lstm" or "dense".

    For "lstm", ``output_dim`` is the hidden size. ``activation`` applies to
    dense blocks only ("linear" or "sigmoid").
    """

    kind: str
    input_dim: int
    output_dim: int
    activation: str = "linear"

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "lstm":
            return {
                "w": (self.input_dim + self.output_dim, _GATES * self.output_dim),
                "b": (_GATES * self.output_dim,),
            }
        return {"w": (self.input_dim, self.output_dim), "b": (self.output_dim,)}

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.tensor_shapes().values())


def _validate_specs(specs: tuple[LayerSpec, ...]) -> None:
    if not specs:
        raise InvalidDims("network needs at least one layer block")
    for spec in specs:
        if spec.kind not in ("lstm", "dense"):
            raise InvalidDims(f"unknown layer kind: {spec.kind!r}")
        if spec.input_dim <= 0 or spec.output_dim <= 0:
            raise InvalidDims(f"non-positive dimension in {spec}")
        if spec.kind == "dense" and spec.activation not in _ACTIVATIONS:
            raise InvalidDims(f"unknown activation: {spec.activation!r}")
    for prev, nxt in zip(specs, specs[1:]):
        if prev.output_dim != nxt.input_dim:
            raise InvalidDims(
                f"block output dim {prev.output_dim} does not feed block "
                f"input dim {nxt.input_dim}"
            )


class NetworkParams:
    """Parameter blocks for one network plus a flat view for the optimizer.

    ``version`` increments on every in-place mutation so gradient caches can
    detect staleness. Traversal order (block order, then "w" before "b") is
    fixed, which makes the flat view deterministic.
    """

    def __init__(self, specs: tuple[LayerSpec, ...], tensors: list[dict[str, np.ndarray]]):
        _validate_specs(specs)
        self.specs = tuple(specs)
        self.tensors = tensors
        self.version = 0
        for spec, block in zip(self.specs, self.tensors):
            for name, shape in spec.tensor_shapes().items():
                if block[name].shape != shape:
                    raise InvalidDims(
                        f"tensor {name} has shape {block[name].shape}, expected {shape}"
                    )
                if not np.isfinite(block[name]).all():
                    raise InvalidDims("non-finite parameter tensor")

    @property
    def n_params(self) -> int:
        return sum(spec.n_params() for spec in self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].output_dim

    def flat(self) -> np.ndarray:
        """Copy of all parameters as one 1-D float64 vector."""
        parts = []
        for block in self.tensors:
            parts.append(block["w"].ravel())
            parts.append(block["b"].ravel())
        return np.concatenate(parts)

    def load_flat(self, vec: np.ndarray) -> None:
        """Write a flat vector back into the parameter blocks."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ShapeMismatch(
                f"flat vector has {vec.shape}, expected ({self.n_params},)"
            )
        if not np.isfinite(vec).all():
            raise NonFiniteLoss("non-finite values in parameter vector")
        offset = 0
        for block in self.tensors:
            for name in ("w", "b"):
                size = block[name].size
                block[name][...] = vec[offset : offset + size].reshape(block[name].shape)
                offset += size
        self.version += 1

    def copy(self) -> "NetworkParams":
        tensors = [{k: v.copy() for k, v in block.items()} for block in self.tensors]
        return NetworkParams(self.specs, tensors)


def init_params(seed: int, specs: tuple[LayerSpec, ...] | list[LayerSpec]) -> NetworkParams:
    """Glorot-uniform weights, zero biases, forget-gate bias 1.0.

    For a dense block the uniform bound is sqrt(6/(in+out)); for an LSTM block
    the per-gate bound uses fan_in = input+hidden, fan_out = hidden.
    """
    specs = tuple(specs)
    _validate_specs(specs)
    rng = np.random.default_rng(seed)
    tensors: list[dict[str, np.ndarray]] = []
    for spec in specs:
        shapes = spec.tensor_shapes()
        if spec.kind == "lstm":
            hid = spec.output_dim
            bound = np.sqrt(6.0 / (spec.input_dim + 2 * hid))
            w = rng.uniform(-bound, bound, size=shapes["w"])
            b = np.zeros(shapes["b"])
            b[hid : 2 * hid] = 1.0
        else:
            bound = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
            w = rng.uniform(-bound, bound, size=shapes["w"])
            b = np.zeros(shapes["b"])
        tensors.append({"w": w, "b": b})
    return NetworkParams(specs, tensors)


@dataclass
class _BlockCache:
    kind: str
    data: dict


@dataclass
class ForwardCache:
    params: NetworkParams
    version: int
    blocks: list[_BlockCache]
    squeezed: bool
    output_shape: tuple[int, ...]


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteLoss(f"non-finite values in {what}")


def rnn_forward(
    params: NetworkParams,
    inputs: np.ndarray,
    initial_state: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the block stack over a sequence.

    ``inputs`` is ``[T, input_dim]`` or ``[T, B, input_dim]``; the output has
    the same leading shape with the final block's output dim. ``initial_state``
    is an optional ``(h0, c0)`` pair for the first LSTM block (zeros default).
    The returned cache is sufficient for an exact backward pass.
    """
    x = np.asarray(inputs, dtype=np.float64)
    squeezed = x.ndim == 2
    if squeezed:
        x = x[:, None, :]
    if x.ndim != 3:
        raise ShapeMismatch(f"inputs must be [T, D] or [T, B, D], got {inputs.shape}")
    if x.shape[2] != params.input_dim:
        raise ShapeMismatch(
            f"input dim {x.shape[2]} does not match network input dim {params.input_dim}"
        )
    _check_finite(x, "inputs")

    caches: list[_BlockCache] = []
    first_lstm = True
    for spec, block in zip(params.specs, params.tensors):
        if spec.kind == "lstm":
            state = initial_state if first_lstm else None
            first_lstm = False
            x, cache = _lstm_forward(spec, block, x, state)
        else:
            x, cache = _dense_forward(spec, block, x)
        caches.append(cache)

    out = x[:, 0, :] if squeezed else x
    fwd = ForwardCache(
        params=params,
        version=params.version,
        blocks=caches,
        squeezed=squeezed,
        output_shape=out.shape,
    )
    return out, fwd


def _lstm_forward(
    spec: LayerSpec,
    block: dict[str, np.ndarray],
    x: np.ndarray,
    initial_state: tuple[np.ndarray, np.ndarray] | None,
) -> tuple[np.ndarray, _BlockCache]:
    steps, batch, _ = x.shape
    hid = spec.output_dim
    w, b = block["w"], block["b"]

    if initial_state is None:
        h = np.zeros((batch, hid))
        c = np.zeros((batch, hid))
    else:
        h = np.asarray(initial_state[0], dtype=np.float64).reshape(batch, hid).copy()
        c = np.asarray(initial_state[1], dtype=np.float64).reshape(batch, hid).copy()

    xh = np.empty((steps, batch, spec.input_dim + hid))
    gates = np.empty((steps, batch, _GATES * hid))
    cs = np.empty((steps, batch, hid))
    tanh_cs = np.empty((steps, batch, hid))
    c_prevs = np.empty((steps, batch, hid))
    hs = np.empty((steps, batch, hid))

    for t in range(steps):
        xh_t = np.concatenate([x[t], h], axis=1)
        z = xh_t @ w + b
        i = _sigmoid(z[:, :hid])
        f = _sigmoid(z[:, hid : 2 * hid])
        g = np.tanh(z[:, 2 * hid : 3 * hid])
        o = _sigmoid(z[:, 3 * hid :])
        c_prevs[t] = c
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c

        xh[t] = xh_t
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        cs[t] = c
        tanh_cs[t] = tanh_c
        hs[t] = h

    cache = _BlockCache(
        kind="lstm",
        data={
            "spec": spec,
            "xh": xh,
            "gates": gates,
            "c_prev": c_prevs,
            "tanh_c": tanh_cs,
            "w": w,
        },
    )
    return hs, cache


def _dense_forward(
    spec: LayerSpec, block: dict[str, np.ndarray], x: np.ndarray
) -> tuple[np.ndarray, _BlockCache]:
    z = x @ block["w"] + block["b"]
    y = _sigmoid(z) if spec.activation == "sigmoid" else z
    cache = _BlockCache(
        kind="dense",
        data={"spec": spec, "x": x, "y": y, "w": block["w"]},
    )
    return y, cache


def backward(cache: ForwardCache, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of the cached forward pass.

    ``upstream`` is d(loss)/d(outputs) with the same shape as the forward
    output. Returns ``(flat parameter gradients, input gradients)``; input
    gradients have the caller's input shape.
    """
    if cache.version != cache.params.version:
        raise StaleCache("parameters changed since the cached forward pass")
    dy = np.asarray(upstream, dtype=np.float64)
    if dy.shape != cache.output_shape:
        raise ShapeMismatch(
            f"upstream gradient shape {dy.shape}, expected {cache.output_shape}"
        )
    _check_finite(dy, "upstream gradient")
    if cache.squeezed:
        dy = dy[:, None, :]

    grads: list[np.ndarray] = []
    for block_cache in reversed(cache.blocks):
        if block_cache.kind == "dense":
            dw, db, dy = _dense_backward(block_cache, dy)
        else:
            dw, db, dy = _lstm_backward(block_cache, dy)
        grads.append(db.ravel())
        grads.append(dw.ravel())
    grads.reverse()
    flat = np.concatenate(grads)
    d_inputs = dy[:, 0, :] if cache.squeezed else dy
    return flat, d_inputs


def _dense_backward(block_cache: _BlockCache, dy: np.ndarray):
    data = block_cache.data
    spec: LayerSpec = data["spec"]
    x, y, w = data["x"], data["y"], data["w"]
    dz = dy * (y * (1.0 - y)) if spec.activation == "sigmoid" else dy
    dw = np.einsum("tbi,tbo->io", x, dz)
    db = dz.sum(axis=(0, 1))
    dx = dz @ w.T
    return dw, db, dx


def _lstm_backward(block_cache: _BlockCache, dh_out: np.ndarray):
    data = block_cache.data
    spec: LayerSpec = data["spec"]
    xh, gates, c_prev, tanh_c, w = (
        data["xh"],
        data["gates"],
        data["c_prev"],
        data["tanh_c"],
        data["w"],
    )
    steps, batch, _ = xh.shape
    hid = spec.output_dim
    in_dim = spec.input_dim

    dw = np.zeros_like(w)
    db = np.zeros(_GATES * hid)
    dx = np.empty((steps, batch, in_dim))
    dh_next = np.zeros((batch, hid))
    dc_next = np.zeros((batch, hid))

    for t in range(steps - 1, -1, -1):
        i = gates[t, :, :hid]
        f = gates[t, :, hid : 2 * hid]
        g = gates[t, :, 2 * hid : 3 * hid]
        o = gates[t, :, 3 * hid :]

        dh = dh_out[t] + dh_next
        do = dh * tanh_c[t]
        dc = dc_next + dh * o * (1.0 - tanh_c[t] ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev[t]
        dc_next = dc * f

        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dw += xh[t].T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ w.T
        dx[t] = dxh[:, :in_dim]
        dh_next = dxh[:, in_dim:]

    return dw, db, dx


@dataclass
class OptimizerState:
    """Plain SGD with post-step parameter clamping.

    ``step_count`` is the accumulator slot; SGD itself keeps no per-parameter
    state, but the field keeps the contract ready for stateful optimizers.
    """

    learning_rate: float = 0.02
    clip_limit: float = 0.5
    step_count: int = field(default=0)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidDims("learning_rate must be positive")
        if self.clip_limit <= 0:
            raise InvalidDims("clip_limit must be positive")


def sgd_step(
    params: NetworkParams,
    gradients: np.ndarray,
    opt: OptimizerState,
    clip: bool = False,
) -> NetworkParams:
    """In-place update ``params <- params - lr * gradients``.

    With ``clip=True`` every parameter is clamped to
    ``[-clip_limit, +clip_limit]`` after the update (used for the adversarial
    critic only). Returns the mutated params for chaining.
    """
    grads = np.asarray(gradients, dtype=np.float64)
    if grads.shape != (params.n_params,):
        raise ShapeMismatch(
            f"gradient vector has {grads.shape}, expected ({params.n_params},)"
        )
    _check_finite(grads, "gradients")
    new_flat = params.flat() - opt.learning_rate * grads
    if clip:
        np.clip(new_flat, -opt.clip_limit, opt.clip_limit, out=new_flat)
    params.load_flat(new_flat)
    opt.step_count += 1
    return params


def gradient_check(params: NetworkParams, loss_fn, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(loss, flat analytic gradients)``. The
    relative error per parameter is |a - n| / max(|a|, |n|, 1e-8).
    """
    if eps <= 0:
        raise InvalidDims("eps must be positive")
    loss, analytic = loss_fn(params)
    if not np.isfinite(loss):
        raise NonFiniteLoss("loss is non-finite at the evaluation point")
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != (params.n_params,):
        raise ShapeMismatch("analytic gradient length does not match parameter count")

    base = params.flat()
    numeric = np.empty_like(base)
    for k in range(base.size):
        probe = base.copy()
        probe[k] = base[k] + eps
        params.load_flat(probe)
        up, _ = loss_fn(params)
        probe[k] = base[k] - eps
        params.load_flat(probe)
        down, _ = loss_fn(params)
        if not (np.isfinite(up) and np.isfinite(down)):
            params.load_flat(base)
            raise NonFiniteLoss("loss is non-finite at a perturbed point")
        numeric[k] = (up - down) / (2.0 * eps)
    params.load_flat(base)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# --- checkpointing -------------------------------------------------------------


def params_to_payload(params: NetworkParams) -> dict:
    return {
        "layer_specs": [
            {
                "kind": s.kind,
                "input_dim": s.input_dim,
                "output_dim": s.output_dim,
                "activation": s.activation,
            }
            for s in params.specs
        ],
        "flat_weights": params.flat().tolist(),
    }


def params_from_payload(payload: dict) -> NetworkParams:
    try:
        specs = tuple(
            LayerSpec(
                kind=s["kind"],
                input_dim=int(s["input_dim"]),
                output_dim=int(s["output_dim"]),
                activation=s.get("activation", "linear"),
            )
            for s in payload["layer_specs"]
        )
        flat = np.asarray(payload["flat_weights"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"bad network payload: {exc}") from exc
    try:
        params = init_params(0, specs)
    except InvalidDims as exc:
        raise CorruptCheckpoint(f"bad layer specs: {exc}") from exc
    if flat.shape != (params.n_params,):
        raise CorruptCheckpoint(
            f"weight count {flat.size} does not match specs ({params.n_params})"
        )
    if not np.isfinite(flat).all():
        raise CorruptCheckpoint("non-finite weights in checkpoint")
    params.load_flat(flat)
    params.version = 0
    return params


def save_params(params: NetworkParams, path) -> None:
    """Write the versioned JSON envelope. Python float repr round-trips
    exactly, so a reload is byte-identical in memory."""
    payload = {"format_version": CHECKPOINT_FORMAT_VERSION, **params_to_payload(params)}
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, allow_nan=False)
    os.replace(tmp, path)


def load_params(path) -> NetworkParams:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(
            f"checkpoint format {version!r} != {CHECKPOINT_FORMAT_VERSION}; "
            "re-train or convert with a matching package version"
        )
    return params_from_payload(payload)
