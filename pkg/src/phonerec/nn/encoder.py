"""Stacked bidirectional LSTM encoder with hand-written reverse-mode gradients.

The encoder maps a T x F feature matrix to T x (num_phones + 1) logits over
the universal phone inventory plus the CTC blank (index 0).  Cells are
standard LSTMs (input/forget/output gates plus tanh candidate); the two
directions of each layer run independently and their outputs are
concatenated.  All math is double precision, which keeps gradient-check
tolerances tight and portable.

encoder_forward caches every activation needed for an exact backward pass in
a ForwardTrace; encoder_backward consumes the trace and an upstream gradient
on the logits and returns parameter gradients plus the gradient on the input
features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PhonerecError


class ConfigError(PhonerecError):
    """Invalid encoder configuration."""


class DimensionMismatch(PhonerecError):
    """Input shape inconsistent with the encoder configuration."""


class TraceMismatch(PhonerecError):
    """Backward called with a trace or gradient from a different forward pass."""


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture description; output_dim counts the phones plus the blank."""

    input_dim: int
    output_dim: int
    num_layers: int = 2
    hidden_size: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "num_layers", "hidden_size"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.output_dim < 2:
            raise ConfigError("output_dim must cover at least one phone plus blank")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")


@dataclass
class LstmDirParams:
    """One direction of one layer; gate order along 4H is (i, f, g, o)."""

    wx: np.ndarray  # (4H, D_in)
    wh: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)


@dataclass
class LstmLayerParams:
    fwd: LstmDirParams
    bwd: LstmDirParams


@dataclass
class EncoderParams:
    """All trainable encoder tensors, tied to the config that shaped them."""

    config: EncoderConfig
    layers: list[LstmLayerParams]
    proj_w: np.ndarray  # (output_dim, 2H)
    proj_b: np.ndarray  # (output_dim,)

    def tensors(self):
        """Yield (name, array) in the canonical serialization order."""
        for i, layer in enumerate(self.layers):
            for tag, direction in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                yield f"layer{i}.{tag}.wx", direction.wx
                yield f"layer{i}.{tag}.wh", direction.wh
                yield f"layer{i}.{tag}.b", direction.b
        yield "proj_w", self.proj_w
        yield "proj_b", self.proj_b

    def copy(self) -> EncoderParams:
        return EncoderParams(
            config=self.config,
            layers=[
                LstmLayerParams(
                    fwd=LstmDirParams(l.fwd.wx.copy(), l.fwd.wh.copy(), l.fwd.b.copy()),
                    bwd=LstmDirParams(l.bwd.wx.copy(), l.bwd.wh.copy(), l.bwd.b.copy()),
                )
                for l in self.layers
            ],
            proj_w=self.proj_w.copy(),
            proj_b=self.proj_b.copy(),
        )

    def zeros_like(self) -> EncoderParams:
        out = self.copy()
        for _, tensor in out.tensors():
            tensor[...] = 0.0
        return out

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for _, t in self.tensors())


@dataclass
class _DirTrace:
    """Per-direction activation cache, stored in processing order."""

    x: np.ndarray  # (T, D_in)
    gi: np.ndarray  # (T, H) input gate
    gf: np.ndarray  # (T, H) forget gate
    gg: np.ndarray  # (T, H) candidate
    go: np.ndarray  # (T, H) output gate
    c: np.ndarray  # (T, H) cell state
    tc: np.ndarray  # (T, H) tanh(cell)
    h: np.ndarray  # (T, H) hidden output


@dataclass
class ForwardTrace:
    """Everything one utterance's backward pass needs."""

    config: EncoderConfig
    directions: list[tuple[_DirTrace, _DirTrace]] = field(repr=False)
    last_hidden: np.ndarray = field(repr=False)  # (T, 2H)

    @property
    def num_frames(self) -> int:
        return self.last_hidden.shape[0]


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def zeros_encoder(config: EncoderConfig) -> EncoderParams:
    """Correctly shaped all-zero parameter holders for this config."""
    H = config.hidden_size
    layers = []
    for layer_index in range(config.num_layers):
        d_in = config.input_dim if layer_index == 0 else 2 * H
        layers.append(
            LstmLayerParams(
                fwd=LstmDirParams(
                    np.zeros((4 * H, d_in)), np.zeros((4 * H, H)), np.zeros(4 * H)
                ),
                bwd=LstmDirParams(
                    np.zeros((4 * H, d_in)), np.zeros((4 * H, H)), np.zeros(4 * H)
                ),
            )
        )
    return EncoderParams(
        config=config,
        layers=layers,
        proj_w=np.zeros((config.output_dim, 2 * H)),
        proj_b=np.zeros(config.output_dim),
    )


def init_encoder(config: EncoderConfig) -> EncoderParams:
    """Deterministic initialization from the config's seed.

    Weight matrices are uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)); biases
    start at zero except the forget gates, which start at 1 so early cell
    states persist.
    """
    rng = np.random.default_rng(config.seed)
    H = config.hidden_size
    params = zeros_encoder(config)
    for layer in params.layers:
        for direction in (layer.fwd, layer.bwd):
            d_in = direction.wx.shape[1]
            direction.wx[...] = _uniform(rng, (4 * H, d_in), d_in)
            direction.wh[...] = _uniform(rng, (4 * H, H), H)
            direction.b[H : 2 * H] = 1.0
    params.proj_w[...] = _uniform(rng, (config.output_dim, 2 * H), 2 * H)
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm_direction_forward(x: np.ndarray, p: LstmDirParams) -> _DirTrace:
    T = x.shape[0]
    H = p.wh.shape[1]
    pre = x @ p.wx.T + p.b  # (T, 4H); recurrent term added per step
    gi = np.empty((T, H))
    gf = np.empty((T, H))
    gg = np.empty((T, H))
    go = np.empty((T, H))
    c = np.empty((T, H))
    tc = np.empty((T, H))
    h = np.empty((T, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for t in range(T):
        a = pre[t] + p.wh @ h_prev
        gi[t] = _sigmoid(a[:H])
        gf[t] = _sigmoid(a[H : 2 * H])
        gg[t] = np.tanh(a[2 * H : 3 * H])
        go[t] = _sigmoid(a[3 * H :])
        c[t] = gf[t] * c_prev + gi[t] * gg[t]
        tc[t] = np.tanh(c[t])
        h[t] = go[t] * tc[t]
        h_prev = h[t]
        c_prev = c[t]
    return _DirTrace(x=x, gi=gi, gf=gf, gg=gg, go=go, c=c, tc=tc, h=h)


def _lstm_direction_backward(
    trace: _DirTrace, p: LstmDirParams, dh_out: np.ndarray
) -> tuple[LstmDirParams, np.ndarray]:
    """Exact gradients for one direction given gradients on its outputs."""
    T, H = trace.h.shape
    dA = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + dh_next
        do = dh * trace.tc[t]
        dc = dc_next + dh * trace.go[t] * (1.0 - trace.tc[t] ** 2)
        di = dc * trace.gg[t]
        c_prev = trace.c[t - 1] if t > 0 else np.zeros(H)
        df = dc * c_prev
        dg = dc * trace.gi[t]
        dA[t, :H] = di * trace.gi[t] * (1.0 - trace.gi[t])
        dA[t, H : 2 * H] = df * trace.gf[t] * (1.0 - trace.gf[t])
        dA[t, 2 * H : 3 * H] = dg * (1.0 - trace.gg[t] ** 2)
        dA[t, 3 * H :] = do * trace.go[t] * (1.0 - trace.go[t])
        dc_next = dc * trace.gf[t]
        dh_next = p.wh.T @ dA[t]
    h_prev_all = np.vstack([np.zeros((1, H)), trace.h[:-1]])
    grads = LstmDirParams(
        wx=dA.T @ trace.x,
        wh=dA.T @ h_prev_all,
        b=dA.sum(axis=0),
    )
    dx = dA @ p.wx
    return grads, dx


def encoder_forward(
    features: np.ndarray, params: EncoderParams
) -> tuple[np.ndarray, ForwardTrace]:
    """Run the encoder over one utterance.

    Returns the T x output_dim logit matrix and the trace needed for
    encoder_backward.  Deterministic: same features and params give
    bit-identical logits.
    """
    config = params.config
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise DimensionMismatch("features must be a T x F matrix with T >= 1")
    if features.shape[1] != config.input_dim:
        raise DimensionMismatch(
            f"feature width {features.shape[1]} != input_dim {config.input_dim}"
        )
    x = features
    directions = []
    for layer in params.layers:
        fwd = _lstm_direction_forward(x, layer.fwd)
        # reverse direction processes reversed time; its trace stays in
        # processing order, outputs get re-aligned here
        bwd = _lstm_direction_forward(x[::-1], layer.bwd)
        directions.append((fwd, bwd))
        x = np.concatenate([fwd.h, bwd.h[::-1]], axis=1)
    logits = x @ params.proj_w.T + params.proj_b
    trace = ForwardTrace(config=config, directions=directions, last_hidden=x)
    return logits, trace


def encoder_backward(
    params: EncoderParams, trace: ForwardTrace, dlogits: np.ndarray
) -> tuple[EncoderParams, np.ndarray]:
    """Exact reverse-mode gradients for one utterance.

    dlogits is the upstream gradient on the logits returned by
    encoder_forward with this trace.  Returns (parameter gradients shaped
    like params, gradient on the input features).
    """
    config = params.config
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if trace.config != config:
        raise TraceMismatch("trace was produced under a different config")
    if dlogits.shape != (trace.num_frames, config.output_dim):
        raise TraceMismatch(
            f"upstream gradient shape {dlogits.shape} does not match "
            f"{(trace.num_frames, config.output_dim)}"
        )
    grads = params.zeros_like()
    grads.proj_w[...] = dlogits.T @ trace.last_hidden
    grads.proj_b[...] = dlogits.sum(axis=0)
    dx = dlogits @ params.proj_w  # gradient on the last layer's concat output
    H = config.hidden_size
    for layer_index in range(config.num_layers - 1, -1, -1):
        fwd_trace, bwd_trace = trace.directions[layer_index]
        layer = params.layers[layer_index]
        g_fwd, dx_fwd = _lstm_direction_backward(fwd_trace, layer.fwd, dx[:, :H])
        g_bwd, dx_bwd = _lstm_direction_backward(bwd_trace, layer.bwd, dx[:, H:][::-1])
        gl = grads.layers[layer_index]
        gl.fwd.wx[...] = g_fwd.wx
        gl.fwd.wh[...] = g_fwd.wh
        gl.fwd.b[...] = g_fwd.b
        gl.bwd.wx[...] = g_bwd.wx
        gl.bwd.wh[...] = g_bwd.wh
        gl.bwd.b[...] = g_bwd.b
        dx = dx_fwd + dx_bwd[::-1]
    return grads, dx
