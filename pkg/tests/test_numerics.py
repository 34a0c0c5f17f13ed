import numpy as np
import pytest

from ansfield.numerics.checkpoint import (
    FORMAT_VERSION,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from ansfield.numerics.denoiser import (
    CHANNELS,
    IN_CHANNELS,
    PARAM_CUT,
    TEMB_DIM,
    backward,
    forward,
    init_params,
    null_token,
    param_specs,
    run_chain,
    validate_params,
)
from ansfield.numerics.gradcheck import fd_gradient, relative_error
from ansfield.numerics.kernels import (
    NonFiniteInput,
    ShapeMismatch,
    conv2d_backward,
    conv2d_forward,
    embedding_sum_backward,
    embedding_sum_forward,
    linear_backward,
    linear_forward,
    mse_backward,
    mse_forward,
    mse_per_item,
    silu_backward,
    silu_forward,
    timestep_embedding,
    upsample2_backward,
    upsample2_forward,
)
from ansfield.numerics.optim import AdamW

RNG = np.random.Generator(np.random.PCG64(0))


# ------------------------------------------------ kernel forwards

def test_conv2d_matches_naive_loops():
    rng = np.random.Generator(np.random.PCG64(1))
    x = rng.standard_normal((2, 3, 6, 5))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    for stride in (1, 2):
        y, _ = conv2d_forward(x, w, b, stride=stride, pad=1)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        oh = (6 + 2 - 3) // stride + 1
        ow = (5 + 2 - 3) // stride + 1
        want = np.zeros((2, 4, oh, ow))
        for bi in range(2):
            for o in range(4):
                for r in range(oh):
                    for c in range(ow):
                        patch = xp[bi, :, r * stride : r * stride + 3,
                                   c * stride : c * stride + 3]
                        want[bi, o, r, c] = (patch * w[o]).sum() + b[o]
        assert np.allclose(y, want, atol=1e-12)


def test_conv2d_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        conv2d_forward(RNG.standard_normal((1, 2, 4, 4)),
                       RNG.standard_normal((3, 5, 3, 3)), np.zeros(3))


def test_linear_forward_and_validation():
    x = np.array([[1.0, 2.0]])
    w = np.array([[3.0, 4.0], [5.0, 6.0]])
    b = np.array([0.5, -0.5])
    assert np.allclose(linear_forward(x, w, b), [[11.5, 16.5]])
    with pytest.raises(ShapeMismatch):
        linear_forward(np.zeros((1, 3)), w, b)


def test_upsample2_and_adjoint():
    x = np.arange(8.0).reshape(1, 2, 2, 2)
    y = upsample2_forward(x)
    assert y.shape == (1, 2, 4, 4)
    assert (y[0, 0, :2, :2] == x[0, 0, 0, 0]).all()
    rng = np.random.Generator(np.random.PCG64(2))
    a = rng.standard_normal((3, 2, 4, 4))
    g = rng.standard_normal((3, 2, 8, 8))
    lhs = float((upsample2_forward(a) * g).sum())
    rhs = float((a * upsample2_backward(g)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_timestep_embedding_structure():
    emb = timestep_embedding(np.array([0, 1, 7]), 8)
    assert emb.shape == (3, 8)
    assert np.allclose(emb[0, :4], 0.0)
    assert np.allclose(emb[0, 4:], 1.0)
    # First frequency is 1: leading columns are sin(t), cos(t).
    assert emb[1, 0] == pytest.approx(np.sin(1.0))
    assert emb[2, 4] == pytest.approx(np.cos(7.0))
    rows = timestep_embedding(np.arange(1, 30), 32)
    d = np.linalg.norm(rows[:, None] - rows[None, :], axis=-1)
    assert (d[~np.eye(29, dtype=bool)] > 1e-3).all()


def test_mse_kernels():
    p = np.array([[1.0, 2.0], [3.0, 4.0]])
    t = np.zeros((2, 2))
    assert mse_forward(p, t) == pytest.approx(30.0 / 4)
    assert np.allclose(mse_backward(p, t), 2.0 * p / 4)
    per = mse_per_item(p, t)
    assert np.allclose(per, [2.5, 12.5])
    assert np.allclose(mse_per_item(p, np.zeros((1, 2))), per)
    with pytest.raises(ShapeMismatch):
        mse_forward(p, np.zeros(3))


def test_embedding_sum_forward_and_empty():
    table = np.arange(12.0).reshape(4, 3)
    out = embedding_sum_forward(((0, 2), (3,)), table)
    assert np.allclose(out, [table[0] + table[2], table[3]])
    with pytest.raises(ShapeMismatch):
        embedding_sum_forward(((0,), ()), table)


# ------------------------------------------------ kernel gradients (FD)

def test_conv2d_backward_matches_fd():
    rng = np.random.Generator(np.random.PCG64(3))
    x = rng.standard_normal((2, 2, 5, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    tgt = rng.standard_normal((2, 3, 3, 2))
    y, cache = conv2d_forward(x, w, b, stride=2, pad=1)
    gx, gw, gb = conv2d_backward(mse_backward(y, tgt), cache)
    for arr, an in ((x, gx), (w, gw), (b, gb)):
        fd = fd_gradient(
            lambda _: mse_forward(conv2d_forward(x, w, b, 2, 1)[0], tgt), arr
        )
        assert relative_error(fd, an) < 1e-6


def test_linear_backward_matches_fd():
    rng = np.random.Generator(np.random.PCG64(4))
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal((2, 4))
    b = rng.standard_normal(2)
    tgt = rng.standard_normal((3, 2))
    gy = mse_backward(linear_forward(x, w, b), tgt)
    gx, gw, gb = linear_backward(gy, x, w)
    for arr, an in ((x, gx), (w, gw), (b, gb)):
        fd = fd_gradient(
            lambda _: mse_forward(linear_forward(x, w, b), tgt), arr
        )
        assert relative_error(fd, an) < 1e-6


def test_silu_backward_matches_fd():
    rng = np.random.Generator(np.random.PCG64(5))
    x = rng.standard_normal((4, 6))
    tgt = rng.standard_normal((4, 6))
    y, sig = silu_forward(x)
    an = silu_backward(mse_backward(y, tgt), x, sig)
    fd = fd_gradient(lambda _: mse_forward(silu_forward(x)[0], tgt), x)
    assert relative_error(fd, an) < 1e-6


def test_embedding_sum_backward_matches_fd():
    rng = np.random.Generator(np.random.PCG64(6))
    table = rng.standard_normal((5, 4))
    tokens = ((0, 2, 2), (4,))
    tgt = rng.standard_normal((2, 4))
    out = embedding_sum_forward(tokens, table)
    an = embedding_sum_backward(mse_backward(out, tgt), tokens, 5, 4)
    fd = fd_gradient(
        lambda _: mse_forward(embedding_sum_forward(tokens, table), tgt), table
    )
    assert relative_error(fd, an) < 1e-6


# ------------------------------------------------ denoiser

def _tiny_setup(n_tokens=5, hw=8, seed=7):
    rng = np.random.Generator(np.random.PCG64(seed))
    params = init_params(rng, n_tokens, zero_head=False)
    z_t = rng.standard_normal((1, 1, hw, hw))
    cond = rng.standard_normal((1, 3, hw, hw))
    tokens = ((0, 2),)
    t = np.array([13])
    target = rng.standard_normal((1, 1, hw, hw))
    return params, z_t, t, cond, tokens, target


def test_denoiser_shapes_and_null_defaults():
    params, z_t, t, cond, tokens, _ = _tiny_setup()
    out = forward(params, z_t, t, cond, tokens)
    assert out.shape == z_t.shape
    # None condition behaves exactly like a zero image; None tokens like
    # the learned null row.
    a = forward(params, z_t, t, None, tokens)
    b = forward(params, z_t, t, np.zeros_like(cond), tokens)
    assert np.array_equal(a, b)
    c = forward(params, z_t, t, cond, None)
    d = forward(params, z_t, t, cond, ((null_token(params),),))
    assert np.array_equal(c, d)


def test_denoiser_input_validation():
    params, z_t, t, cond, tokens, _ = _tiny_setup()
    with pytest.raises(ShapeMismatch):
        forward(params, z_t[:, :, :6], t, None, tokens)  # H not /4
    with pytest.raises(ShapeMismatch):
        forward(params, z_t[0], t, None, tokens)
    with pytest.raises(ShapeMismatch):
        forward(params, z_t, t, cond[:, :2], tokens)
    with pytest.raises(ShapeMismatch):
        forward(params, z_t, t, cond, ((0,), (1,)))
    with pytest.raises(NonFiniteInput):
        forward(params, z_t * np.nan, t, None, tokens)


def test_denoiser_backward_matches_fd_on_selected_arrays():
    params, z_t, t, cond, tokens, target = _tiny_setup()
    cache: dict = {}
    out = forward(params, z_t, t, cond, tokens, cache=cache)
    grads = backward(params, cache, mse_backward(out, target))

    def loss(_):
        return mse_forward(forward(params, z_t, t, cond, tokens), target)

    for name in ("head_w", "head_b", "t1_b", "e0a_b", "bott_b", "ti_w", "ti_b"):
        fd = fd_gradient(loss, params[name])
        assert relative_error(fd, grads[name]) < 1e-5, name
    # Embedding rows: the two used tokens get gradient, unused rows zero.
    fd_emb = fd_gradient(loss, params["emb"])
    assert relative_error(fd_emb, grads["emb"]) < 1e-5
    assert np.allclose(grads["emb"][[1, 3, 4]], 0.0)


def test_run_chain_suffix_reproduces_forward():
    params, z_t, t, cond, tokens, _ = _tiny_setup()
    cache: dict = {}
    out = forward(params, z_t, t, cond, tokens, cache=cache)
    for cut in sorted({cut for cut, _ in PARAM_CUT.values()}):
        doubled = np.repeat(cache[cut], 2, axis=0)
        outs = run_chain(params, cache, base=cache, start=cut, start_value=doubled)
        assert outs.shape[0] == 2
        assert np.allclose(outs[0], out[0], atol=1e-12)
        assert np.allclose(outs[1], out[0], atol=1e-12)


def test_init_and_validate_params():
    params = init_params(np.random.Generator(np.random.PCG64(0)), 26)
    assert validate_params(params) == 26
    assert (params["head_w"] == 0).all()
    assert null_token(params) == 25
    assert params["e0a_w"].shape == (CHANNELS[0], IN_CHANNELS, 3, 3)
    assert params["t2_w"].shape == (CHANNELS[2], TEMB_DIM)
    assert len(params) == len(param_specs(26))
    bad = dict(params)
    del bad["bott_w"]
    with pytest.raises(ShapeMismatch, match="missing"):
        validate_params(bad)
    bad = dict(params, rogue=np.zeros(3))
    with pytest.raises(ShapeMismatch, match="unexpected"):
        validate_params(bad)
    bad = dict(params, head_b=np.array([np.inf]))
    with pytest.raises(NonFiniteInput):
        validate_params(bad)


# ------------------------------------------------ optimizer

def test_adamw_minimizes_quadratic():
    rng = np.random.Generator(np.random.PCG64(8))
    target = rng.standard_normal((4, 3))
    params = {"p": np.zeros((4, 3))}
    opt = AdamW(lr=0.05)
    for _ in range(800):
        opt.step(params, {"p": params["p"] - target})
    assert np.abs(params["p"] - target).max() < 1e-4


def test_adamw_first_step_is_signed_lr():
    params = {"p": np.array([1.0, -2.0])}
    opt = AdamW(lr=0.1)
    opt.step(params, {"p": np.array([0.3, -0.7])})
    assert params["p"] == pytest.approx([1.0 - 0.1, -2.0 + 0.1], abs=1e-6)


def test_adamw_decoupled_weight_decay():
    p0 = np.array([2.0, -4.0])
    params = {"p": p0.copy()}
    opt = AdamW(lr=0.1, weight_decay=0.5)
    for k in range(3):
        opt.step(params, {"p": np.zeros(2)})
        assert params["p"] == pytest.approx(p0 * (1 - 0.1 * 0.5) ** (k + 1))


def test_adamw_shape_mismatch():
    opt = AdamW()
    with pytest.raises(ShapeMismatch):
        opt.step({"p": np.zeros(2)}, {"p": np.zeros(3)})


# ------------------------------------------------ checkpoints

def test_checkpoint_round_trip(tmp_path):
    params = init_params(np.random.Generator(np.random.PCG64(9)), 7,
                         zero_head=False)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, extra={"steps": 42})
    loaded, manifest = load_checkpoint(path)
    assert sorted(loaded) == sorted(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k])
    assert manifest["steps"] == 42
    assert manifest["format_version"] == FORMAT_VERSION
    assert validate_params(loaded) == 7


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"a": np.ones((2, 2))})
    (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad.ckpt")
    manifest = (tmp_path / "m.json").read_text().replace("[\n   2,\n   2\n  ]", "[2,3]")
    (tmp_path / "m.json").write_text(manifest)
    with pytest.raises(CheckpointError, match="mismatch"):
        load_checkpoint(path)


def test_checkpoint_rejects_non_finite(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"a": np.array([1.0, np.nan])})
    with pytest.raises(CheckpointError, match="non-finite"):
        load_checkpoint(path)
