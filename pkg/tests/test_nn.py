import numpy as np
import pytest

from phonerec.nn import (
    AllophoneLayer,
    Checkpoint,
    ConfigError,
    CorruptFile,
    DimensionMismatch,
    EncoderConfig,
    TraceMismatch,
    allophone_backward,
    allophone_forward,
    allophone_penalty,
    encoder_backward,
    encoder_forward,
    init_encoder,
    load_checkpoint,
    penalty_gradient,
    save_checkpoint,
    zeros_encoder,
)
from phonerec.phoneset import SignatureMatrix


def rel_err(a, b):
    return abs(a - b) / max(abs(a) + abs(b), 1e-8)


# ---------------------------------------------------------------- encoder


def test_init_deterministic_given_seed():
    cfg = EncoderConfig(input_dim=3, output_dim=4, num_layers=2, hidden_size=5, seed=7)
    a = init_encoder(cfg)
    b = init_encoder(cfg)
    for (_, ta), (_, tb) in zip(a.tensors(), b.tensors()):
        assert np.array_equal(ta, tb)


def test_init_differs_across_seeds():
    base = dict(input_dim=3, output_dim=4, num_layers=1, hidden_size=5)
    a = init_encoder(EncoderConfig(seed=1, **base))
    b = init_encoder(EncoderConfig(seed=2, **base))
    assert not np.array_equal(a.proj_w, b.proj_w)


def test_forget_gate_bias_is_one():
    cfg = EncoderConfig(input_dim=2, output_dim=3, num_layers=1, hidden_size=4, seed=0)
    params = init_encoder(cfg)
    H = cfg.hidden_size
    for layer in params.layers:
        for d in (layer.fwd, layer.bwd):
            assert np.array_equal(d.b[H : 2 * H], np.ones(H))
            assert np.array_equal(d.b[:H], np.zeros(H))


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=2, output_dim=3, hidden_size=0)
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=0, output_dim=3)
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=2, output_dim=1)
    with pytest.raises(ConfigError):
        EncoderConfig(input_dim=2, output_dim=3, seed=-1)


def test_forward_shape_contract():
    cfg = EncoderConfig(input_dim=8, output_dim=6, num_layers=2, hidden_size=4, seed=3)
    params = init_encoder(cfg)
    logits, trace = encoder_forward(np.random.default_rng(0).normal(size=(7, 8)), params)
    assert logits.shape == (7, 6)
    assert trace.num_frames == 7


def test_forward_zero_params_yield_projection_bias():
    cfg = EncoderConfig(input_dim=3, output_dim=4, num_layers=2, hidden_size=4, seed=0)
    params = zeros_encoder(cfg)
    params.proj_b[...] = [0.5, -1.0, 2.0, 0.0]
    logits, _ = encoder_forward(np.ones((5, 3)), params)
    assert np.array_equal(logits, np.tile(params.proj_b, (5, 1)))


def test_forward_deterministic():
    cfg = EncoderConfig(input_dim=4, output_dim=5, num_layers=2, hidden_size=3, seed=9)
    params = init_encoder(cfg)
    x = np.random.default_rng(1).normal(size=(6, 4))
    a, _ = encoder_forward(x, params)
    b, _ = encoder_forward(x, params)
    assert np.array_equal(a, b)


def test_forward_dimension_mismatch():
    cfg = EncoderConfig(input_dim=4, output_dim=5, num_layers=1, hidden_size=3, seed=0)
    params = init_encoder(cfg)
    with pytest.raises(DimensionMismatch):
        encoder_forward(np.zeros((5, 3)), params)
    with pytest.raises(DimensionMismatch):
        encoder_forward(np.zeros((0, 4)), params)


def test_backward_rejects_wrong_shape():
    cfg = EncoderConfig(input_dim=2, output_dim=3, num_layers=1, hidden_size=2, seed=0)
    params = init_encoder(cfg)
    _, trace = encoder_forward(np.zeros((4, 2)), params)
    with pytest.raises(TraceMismatch):
        encoder_backward(params, trace, np.zeros((4, 4)))


def test_backward_zero_upstream_gives_zero_grads():
    cfg = EncoderConfig(input_dim=2, output_dim=3, num_layers=2, hidden_size=2, seed=4)
    params = init_encoder(cfg)
    _, trace = encoder_forward(np.random.default_rng(2).normal(size=(5, 2)), params)
    grads, dx = encoder_backward(params, trace, np.zeros((5, 3)))
    for _, tensor in grads.tensors():
        assert np.array_equal(tensor, np.zeros_like(tensor))
    assert np.array_equal(dx, np.zeros((5, 2)))


def test_encoder_gradient_matches_finite_differences():
    # Linear probe loss L = sum(R * logits); upstream gradient is exactly R.
    cfg = EncoderConfig(input_dim=2, output_dim=3, num_layers=2, hidden_size=3, seed=11)
    params = init_encoder(cfg)
    rng = np.random.default_rng(42)
    x = rng.normal(size=(5, 2))
    upstream = rng.normal(size=(5, 3))

    def loss_fn():
        logits, _ = encoder_forward(x, params)
        return float((logits * upstream).sum())

    _, trace = encoder_forward(x, params)
    grads, dx = encoder_backward(params, trace, upstream)

    eps = 1e-6
    worst = 0.0
    for (_, tensor), (_, grad) in zip(params.tensors(), grads.tensors()):
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            worst = max(worst, rel_err(fd, gflat[i]))
    assert worst <= 1e-3

    # input gradient too
    for t in range(x.shape[0]):
        for j in range(x.shape[1]):
            orig = x[t, j]
            x[t, j] = orig + eps
            up = loss_fn()
            x[t, j] = orig - eps
            down = loss_fn()
            x[t, j] = orig
            fd = (up - down) / (2 * eps)
            assert rel_err(fd, dx[t, j]) <= 1e-3


# ---------------------------------------------------------------- allophone


def sig(rows, num_phones):
    entries = np.zeros((len(rows), num_phones))
    for j, allophones in enumerate(rows):
        for k in allophones:
            entries[j, k - 1] = 1.0
    return SignatureMatrix(entries=entries, phonemes=tuple(f"q{j}" for j in range(len(rows))))


def test_allophone_binary_maxpool_example():
    # phoneme 0 pools phones {1,2}, phoneme 1 pools {3}
    layer = AllophoneLayer.from_signature(sig([(1, 2), (3,)], 3), alpha=10.0)
    h = np.array([[0.0, 0.2, 0.7, -0.1]])  # blank, then phones 1..3
    out, _ = allophone_forward(h, layer)
    assert out.tolist() == [[0.0, 0.7, -0.1]]


def test_allophone_weighted_example_full_support():
    signature = sig([(1, 2, 3), (1, 2, 3)], 3)
    layer = AllophoneLayer(
        weights=np.array([[1.0, 0.5, 0.0], [0.0, 0.0, 1.0]]),
        signature=signature,
        alpha=0.0,
    )
    h = np.array([[0.0, 0.2, 0.7, -0.1]])
    out, _ = allophone_forward(h, layer)
    assert out[0, 1] == pytest.approx(0.35)
    assert out[0, 2] == pytest.approx(0.0)


def test_allophone_zero_weights_give_zero_logits():
    signature = sig([(1, 2), (3,)], 3)
    layer = AllophoneLayer(weights=np.zeros((2, 3)), signature=signature, alpha=1.0)
    h = np.random.default_rng(0).normal(size=(4, 4))
    out, _ = allophone_forward(h, layer)
    assert np.array_equal(out[:, 1:], np.zeros((4, 2)))
    assert np.array_equal(out[:, 0], h[:, 0])


def test_allophone_binary_equals_support_max_bitwise():
    rng = np.random.default_rng(123)
    num_phones = 6
    rows = []
    for _ in range(4):
        size = int(rng.integers(1, num_phones + 1))
        rows.append(tuple(rng.choice(np.arange(1, num_phones + 1), size=size, replace=False)))
    signature = sig(rows, num_phones)
    layer = AllophoneLayer.from_signature(signature)
    h = rng.normal(size=(50, num_phones + 1))
    out, _ = allophone_forward(h, layer)
    for t in range(50):
        for j, allophones in enumerate(rows):
            want = max(h[t, k] for k in allophones)
            assert out[t, j + 1] == want  # bitwise


def test_allophone_monotone_in_phone_logits():
    rng = np.random.default_rng(5)
    signature = sig([(1, 2), (2, 3)], 3)
    layer = AllophoneLayer(
        weights=np.abs(rng.normal(size=(2, 3))), signature=signature, alpha=0.0
    )
    h = rng.normal(size=(8, 4))
    base, _ = allophone_forward(h, layer)
    for k in range(1, 4):
        bumped = h.copy()
        bumped[:, k] += 0.5
        out, _ = allophone_forward(bumped, layer)
        assert (out[:, 1:] >= base[:, 1:] - 1e-15).all()


def test_allophone_dimension_mismatch():
    layer = AllophoneLayer.from_signature(sig([(1,)], 2))
    with pytest.raises(DimensionMismatch):
        allophone_forward(np.zeros((3, 4)), layer)


def test_penalty_values():
    signature = sig([(1, 2), (3,)], 3)
    layer = AllophoneLayer.from_signature(signature, alpha=10.0)
    assert allophone_penalty(layer) == 0.0
    layer.weights[0, 0] += 0.1
    assert allophone_penalty(layer) == pytest.approx(0.1)
    layer.alpha = 0.0
    assert allophone_penalty(layer) == 0.0


def test_penalty_gradient_zero_at_signature():
    layer = AllophoneLayer.from_signature(sig([(1, 2), (3,)], 3), alpha=5.0)
    assert np.array_equal(penalty_gradient(layer), np.zeros((2, 3)))


def test_penalty_nonnegative_property():
    rng = np.random.default_rng(8)
    signature = sig([(1, 2), (3,)], 3)
    for _ in range(50):
        layer = AllophoneLayer(
            weights=rng.normal(size=(2, 3)), signature=signature, alpha=float(rng.uniform(0, 5))
        )
        assert allophone_penalty(layer) >= 0.0


def test_allophone_backward_matches_finite_differences():
    rng = np.random.default_rng(77)
    signature = sig([(1, 2, 4), (2, 3), (4,)], 4)
    layer = AllophoneLayer(
        weights=signature.entries + rng.normal(size=(3, 4)) * 0.2,
        signature=signature,
        alpha=0.0,
    )
    h = rng.normal(size=(6, 5))
    upstream = rng.normal(size=(6, 4))

    def loss_fn():
        out, _ = allophone_forward(h, layer)
        return float((out * upstream).sum())

    out, trace = allophone_forward(h, layer)
    dh, dw = allophone_backward(layer, trace, upstream)

    eps = 1e-6
    for t in range(h.shape[0]):
        for k in range(h.shape[1]):
            orig = h[t, k]
            h[t, k] = orig + eps
            up = loss_fn()
            h[t, k] = orig - eps
            down = loss_fn()
            h[t, k] = orig
            assert rel_err((up - down) / (2 * eps), dh[t, k]) <= 1e-3
    for j in range(3):
        for k in range(4):
            orig = layer.weights[j, k]
            layer.weights[j, k] = orig + eps
            up = loss_fn()
            layer.weights[j, k] = orig - eps
            down = loss_fn()
            layer.weights[j, k] = orig
            assert rel_err((up - down) / (2 * eps), dw[j, k]) <= 1e-3


def test_allophone_backward_shape_check():
    layer = AllophoneLayer.from_signature(sig([(1,)], 2))
    _, trace = allophone_forward(np.zeros((3, 3)), layer)
    with pytest.raises(TraceMismatch):
        allophone_backward(layer, trace, np.zeros((3, 3)))


# ---------------------------------------------------------------- checkpoint


def make_checkpoint(seed=0, with_allophone=True):
    cfg = EncoderConfig(input_dim=3, output_dim=5, num_layers=2, hidden_size=4, seed=seed)
    params = init_encoder(cfg)
    layers = {}
    if with_allophone:
        signature = sig([(1, 2), (3, 4)], 4)
        layer = AllophoneLayer.from_signature(signature, alpha=2.5)
        layer.weights[0, 1] = 0.75
        layers["lgx"] = layer
    return Checkpoint(params=params, allophone_layers=layers, epoch=17, dev_per=42.5)


def test_checkpoint_roundtrip_bytes(tmp_path):
    ckpt = make_checkpoint()
    p1 = tmp_path / "a.apnn"
    p2 = tmp_path / "b.apnn"
    save_checkpoint(ckpt, p1)
    loaded = load_checkpoint(p1)
    save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.epoch == 17
    assert loaded.dev_per == 42.5
    for (_, a), (_, b) in zip(ckpt.params.tensors(), loaded.params.tensors()):
        assert np.array_equal(a, b)
    layer = loaded.allophone_layers["lgx"]
    assert layer.alpha == 2.5
    assert layer.signature.phonemes == ("q0", "q1")
    assert np.array_equal(layer.weights, ckpt.allophone_layers["lgx"].weights)


def test_checkpoint_none_dev_per(tmp_path):
    ckpt = make_checkpoint(with_allophone=False)
    ckpt.dev_per = None
    path = tmp_path / "c.apnn"
    save_checkpoint(ckpt, path)
    assert load_checkpoint(path).dev_per is None


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.apnn"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CorruptFile):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    ckpt = make_checkpoint()
    path = tmp_path / "t.apnn"
    save_checkpoint(ckpt, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 9])
    with pytest.raises(CorruptFile):
        load_checkpoint(path)


def test_checkpoint_rejects_trailing_garbage(tmp_path):
    ckpt = make_checkpoint()
    path = tmp_path / "g.apnn"
    save_checkpoint(ckpt, path)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(CorruptFile):
        load_checkpoint(path)


def test_checkpoint_rejects_nonfinite(tmp_path):
    ckpt = make_checkpoint()
    ckpt.params.proj_w[0, 0] = np.nan
    with pytest.raises(Exception):
        save_checkpoint(ckpt, tmp_path / "n.apnn")
