"""U-shaped convolutional noise predictor with hand-staged gradients.

Three resolution levels (16/32/64 channels), 3x3 convs, stride-2
downsampling, nearest-neighbor upsampling with skip concatenation.
The timestep enters as a sinusoidal embedding projected per level. The
question's token embedding (summed) enters twice: projected to a few
constant planes concatenated with the input (so the first conv already
sees question identity next to the scene pixels) and broadcast-added at
the bottleneck. Null text is a dedicated learned row, null image a zero
image.

The forward pass is a flat chain of named ops (_OPS). Running the chain
with a cache gives backward() everything it needs; re-running it from an
interior tensor is how the finite-difference checker probes parameters
without paying for full forwards.
"""

from __future__ import annotations

import numpy as np

from .kernels import (
    NonFiniteInput,
    ShapeMismatch,
    check_finite,
    conv2d_backward,
    conv2d_forward,
    embedding_sum_backward,
    embedding_sum_forward,
    linear_backward,
    linear_forward,
    silu_backward,
    silu_forward,
    timestep_embedding,
    upsample2_backward,
    upsample2_forward,
)

CHANNELS = (16, 32, 64)
TEMB_DIM = 32
TOKEN_CHANNELS = 4
IN_CHANNELS = 1 + 3 + TOKEN_CHANNELS  # noisy field + render + token planes
EMB_DIM = CHANNELS[2]


def param_specs(n_tokens: int) -> list[tuple[str, tuple[int, ...]]]:
    c0, c1, c2 = CHANNELS
    return [
        ("ti_w", (TOKEN_CHANNELS, EMB_DIM)), ("ti_b", (TOKEN_CHANNELS,)),
        ("e0a_w", (c0, IN_CHANNELS, 3, 3)), ("e0a_b", (c0,)),
        ("t0_w", (c0, TEMB_DIM)), ("t0_b", (c0,)),
        ("e0b_w", (c0, c0, 3, 3)), ("e0b_b", (c0,)),
        ("d1_w", (c1, c0, 3, 3)), ("d1_b", (c1,)),
        ("t1_w", (c1, TEMB_DIM)), ("t1_b", (c1,)),
        ("e1b_w", (c1, c1, 3, 3)), ("e1b_b", (c1,)),
        ("d2_w", (c2, c1, 3, 3)), ("d2_b", (c2,)),
        ("t2_w", (c2, TEMB_DIM)), ("t2_b", (c2,)),
        ("e2b_w", (c2, c2, 3, 3)), ("e2b_b", (c2,)),
        ("emb", (n_tokens, EMB_DIM)),
        ("bott_w", (c2, c2, 3, 3)), ("bott_b", (c2,)),
        ("u1_w", (c1, c2, 3, 3)), ("u1_b", (c1,)),
        ("f1_w", (c1, c1 + c1, 3, 3)), ("f1_b", (c1,)),
        ("u0_w", (c0, c1, 3, 3)), ("u0_b", (c0,)),
        ("f0_w", (c0, c0 + c0, 3, 3)), ("f0_b", (c0,)),
        ("head_w", (1, c0, 3, 3)), ("head_b", (1,)),
    ]


def init_params(
    rng: np.random.Generator, n_tokens: int, zero_head: bool = True
) -> dict[str, np.ndarray]:
    """He-scaled random init; the output head starts at zero by default
    so an untrained model predicts zero noise."""
    params: dict[str, np.ndarray] = {}
    for name, shape in param_specs(n_tokens):
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=np.float64)
        elif name == "emb":
            params[name] = 0.05 * rng.standard_normal(shape)
        elif name.startswith("head") and zero_head:
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            params[name] = std * rng.standard_normal(shape)
    return params


def null_token(params: dict[str, np.ndarray]) -> int:
    """The learned null-text row is the last embedding row by convention."""
    return params["emb"].shape[0] - 1


def validate_params(params: dict[str, np.ndarray]) -> int:
    """Check every parameter against param_specs and for finiteness; returns n_tokens."""
    if "emb" not in params:
        raise ShapeMismatch("missing embedding table 'emb'")
    n_tokens = params["emb"].shape[0]
    specs = dict(param_specs(n_tokens))
    for name, shape in specs.items():
        if name not in params:
            raise ShapeMismatch(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ShapeMismatch(
                f"{name}: expected {shape}, got {params[name].shape}"
            )
        check_finite(name, params[name])
    extra = set(params) - set(specs)
    if extra:
        raise ShapeMismatch(f"unexpected parameter arrays: {sorted(extra)}")
    return n_tokens


def _conv(P, get, x_name, w_name, stride=1):
    y, c = conv2d_forward(get(x_name), P[w_name + "_w"], P[w_name + "_b"], stride, 1)
    return y, {"conv": c}


def _conv_temb(P, get, x_name, w_name, t_name, stride):
    y, c = conv2d_forward(get(x_name), P[w_name + "_w"], P[w_name + "_b"], stride, 1)
    te = linear_forward(get("temb"), P[t_name + "_w"], P[t_name + "_b"])
    return y + te[:, :, None, None], {"conv": c}


def _silu(P, get, x_name):
    y, sig = silu_forward(get(x_name))
    return y, {"sig": sig, "x": x_name}


def _cat(get, a_name, b_name):
    a, b = get(a_name), get(b_name)
    m = max(a.shape[0], b.shape[0])
    a = np.broadcast_to(a, (m,) + a.shape[1:])
    b = np.broadcast_to(b, (m,) + b.shape[1:])
    return np.concatenate([a, b], axis=1), None


def _token_input(P, g):
    te = linear_forward(g("tsum"), P["ti_w"], P["ti_b"])
    b, _, h, w = g("zc").shape
    planes = np.broadcast_to(te[:, :, None, None], (te.shape[0], te.shape[1], h, w))
    return planes, None


# The chain: (tensor name, fn(params, get) -> (value, aux)). Order is
# topological; `get` resolves earlier tensors (from this run or from a
# cached baseline when re-running a suffix).
_OPS: tuple = (
    ("tsum", lambda P, g: (embedding_sum_forward(g("tokens"), P["emb"]), None)),
    ("tinp", _token_input),
    ("x", lambda P, g: _cat(g, "zc", "tinp")),
    ("pre0", lambda P, g: _conv_temb(P, g, "x", "e0a", "t0", 1)),
    ("a0", lambda P, g: _silu(P, g, "pre0")),
    ("h0", lambda P, g: _conv(P, g, "a0", "e0b")),
    ("s0", lambda P, g: _silu(P, g, "h0")),
    ("pre1", lambda P, g: _conv_temb(P, g, "s0", "d1", "t1", 2)),
    ("a1", lambda P, g: _silu(P, g, "pre1")),
    ("h1", lambda P, g: _conv(P, g, "a1", "e1b")),
    ("s1", lambda P, g: _silu(P, g, "h1")),
    ("pre2", lambda P, g: _conv_temb(P, g, "s1", "d2", "t2", 2)),
    ("a2", lambda P, g: _silu(P, g, "pre2")),
    ("h2", lambda P, g: _conv(P, g, "a2", "e2b")),
    ("s2", lambda P, g: _silu(P, g, "h2")),
    ("binp", lambda P, g: (g("s2") + g("tsum")[:, :, None, None], None)),
    ("hb", lambda P, g: _conv(P, g, "binp", "bott")),
    ("ab", lambda P, g: _silu(P, g, "hb")),
    ("u1", lambda P, g: (upsample2_forward(g("ab")), None)),
    ("hu1", lambda P, g: _conv(P, g, "u1", "u1")),
    ("au1", lambda P, g: _silu(P, g, "hu1")),
    ("cat1", lambda P, g: _cat(g, "au1", "s1")),
    ("hf1", lambda P, g: _conv(P, g, "cat1", "f1")),
    ("af1", lambda P, g: _silu(P, g, "hf1")),
    ("u0", lambda P, g: (upsample2_forward(g("af1")), None)),
    ("hu0", lambda P, g: _conv(P, g, "u0", "u0")),
    ("au0", lambda P, g: _silu(P, g, "hu0")),
    ("cat0", lambda P, g: _cat(g, "au0", "s0")),
    ("hf0", lambda P, g: _conv(P, g, "cat0", "f0")),
    ("af0", lambda P, g: _silu(P, g, "hf0")),
    ("out", lambda P, g: _conv(P, g, "af0", "head")),
)

_OP_INDEX = {name: k for k, (name, _) in enumerate(_OPS)}

# Where each parameter array first touches the chain, and how it enters
# its op. Used by the finite-difference checker.
PARAM_CUT = {
    "ti_w": ("tinp", "tok_w"), "ti_b": ("tinp", "lin_b"),
    "e0a_w": ("pre0", "conv_w"), "e0a_b": ("pre0", "conv_b"),
    "t0_w": ("pre0", "lin_w"), "t0_b": ("pre0", "lin_b"),
    "e0b_w": ("h0", "conv_w"), "e0b_b": ("h0", "conv_b"),
    "d1_w": ("pre1", "conv_w"), "d1_b": ("pre1", "conv_b"),
    "t1_w": ("pre1", "lin_w"), "t1_b": ("pre1", "lin_b"),
    "e1b_w": ("h1", "conv_w"), "e1b_b": ("h1", "conv_b"),
    "d2_w": ("pre2", "conv_w"), "d2_b": ("pre2", "conv_b"),
    "t2_w": ("pre2", "lin_w"), "t2_b": ("pre2", "lin_b"),
    "e2b_w": ("h2", "conv_w"), "e2b_b": ("h2", "conv_b"),
    "emb": ("tsum", "emb"),
    "bott_w": ("hb", "conv_w"), "bott_b": ("hb", "conv_b"),
    "u1_w": ("hu1", "conv_w"), "u1_b": ("hu1", "conv_b"),
    "f1_w": ("hf1", "conv_w"), "f1_b": ("hf1", "conv_b"),
    "u0_w": ("hu0", "conv_w"), "u0_b": ("hu0", "conv_b"),
    "f0_w": ("hf0", "conv_w"), "f0_b": ("hf0", "conv_b"),
    "head_w": ("out", "conv_w"), "head_b": ("out", "conv_b"),
}


def _normalize_inputs(params, z_t, t, cond_img, tokens):
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.ndim != 4 or z_t.shape[1] != 1:
        raise ShapeMismatch(f"z_t must be (B,1,H,W), got {z_t.shape}")
    b, _, h, w = z_t.shape
    if h % 4 or w % 4:
        raise ShapeMismatch(f"H and W must be divisible by 4, got {h}x{w}")
    check_finite("z_t", z_t)
    if cond_img is None:
        cond_img = np.zeros((b, 3, h, w), dtype=np.float64)
    else:
        cond_img = np.asarray(cond_img, dtype=np.float64)
        if cond_img.shape != (b, 3, h, w):
            raise ShapeMismatch(f"cond_img must be (B,3,H,W), got {cond_img.shape}")
        check_finite("cond_img", cond_img)
    if tokens is None:
        tokens = ((null_token(params),),) * b
    else:
        tokens = tuple(tuple(int(i) for i in seq) for seq in tokens)
        if len(tokens) != b:
            raise ShapeMismatch("tokens must have one sequence per batch item")
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if t.shape[0] == 1 and b > 1:
        t = np.repeat(t, b)
    if t.shape[0] != b:
        raise ShapeMismatch("t must be scalar or length B")
    check_finite("t", t)
    return z_t, t, cond_img, tokens


def run_chain(
    params: dict,
    env: dict,
    record: dict | None = None,
    base: dict | None = None,
    start: str | None = None,
    start_value: np.ndarray | None = None,
) -> np.ndarray:
    """Execute _OPS. With (base, start, start_value), the named tensor is
    replaced (possibly with a larger batch) and every earlier tensor is
    read from the cached baseline; later ops are recomputed."""
    vals: dict[str, np.ndarray] = {}
    begin = 0
    if start is not None:
        vals[start] = start_value
        begin = _OP_INDEX[start] + 1
        m = start_value.shape[0]

        def get(name):
            if name in vals:
                return vals[name]
            if name == "tokens":
                return base["tokens"]
            arr = base[name] if name in base else env[name]
            if arr.shape[0] == m:
                return arr
            return np.broadcast_to(arr, (m,) + arr.shape[1:])

    else:

        def get(name):
            return vals[name] if name in vals else env[name]

    for k in range(begin, len(_OPS)):
        name, fn = _OPS[k]
        value, aux = fn(params, get)
        vals[name] = value
        if record is not None:
            record[name] = value
            if aux is not None:
                record[name + ":aux"] = aux
    return vals["out"]


def forward(
    params: dict,
    z_t: np.ndarray,
    t,
    cond_img: np.ndarray | None,
    tokens=None,
    cache: dict | None = None,
) -> np.ndarray:
    """Predicted noise, same shape as z_t. Pass a dict as `cache` to
    record every intermediate for backward()/gradcheck."""
    z_t, t, cond_img, tokens = _normalize_inputs(params, z_t, t, cond_img, tokens)
    env = {
        "zc": np.concatenate([z_t, cond_img], axis=1),
        "temb": timestep_embedding(t, TEMB_DIM),
        "tokens": tokens,
    }
    if cache is not None:
        cache.update(env)
    out = run_chain(params, env, record=cache)
    return out


def backward(params: dict, cache: dict, g_out: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss through the cached chain.

    g_out is dLoss/d(out). Returns gradients for every parameter array.
    """
    grads: dict[str, np.ndarray] = {}

    def conv_back(g, op_name, w_name):
        gx, gw, gb = conv2d_backward(g, cache[op_name + ":aux"]["conv"])
        grads[w_name + "_w"] = gw
        grads[w_name + "_b"] = gb
        return gx

    def temb_back(g, t_name):
        gt = g.sum(axis=(2, 3))
        _, gw, gb = linear_backward(gt, cache["temb"], params[t_name + "_w"])
        grads[t_name + "_w"] = gw
        grads[t_name + "_b"] = gb

    def silu_back(g, op_name):
        aux = cache[op_name + ":aux"]
        return silu_backward(g, cache[aux["x"]], aux["sig"])

    c0, c1 = CHANNELS[0], CHANNELS[1]

    g_af0 = conv_back(g_out, "out", "head")
    g_hf0 = silu_back(g_af0, "af0")
    g_cat0 = conv_back(g_hf0, "hf0", "f0")
    g_au0, g_s0_skip = g_cat0[:, :c0], g_cat0[:, c0:]
    g_hu0 = silu_back(g_au0, "au0")
    g_u0 = conv_back(g_hu0, "hu0", "u0")
    g_af1 = upsample2_backward(g_u0)
    g_hf1 = silu_back(g_af1, "af1")
    g_cat1 = conv_back(g_hf1, "hf1", "f1")
    g_au1, g_s1_skip = g_cat1[:, :c1], g_cat1[:, c1:]
    g_hu1 = silu_back(g_au1, "au1")
    g_u1 = conv_back(g_hu1, "hu1", "u1")
    g_ab = upsample2_backward(g_u1)
    g_hb = silu_back(g_ab, "ab")
    g_binp = conv_back(g_hb, "hb", "bott")

    g_tsum = g_binp.sum(axis=(2, 3))  # bottleneck path; input path added below

    g_s2 = g_binp
    g_h2 = silu_back(g_s2, "s2")
    g_a2 = conv_back(g_h2, "h2", "e2b")
    g_pre2 = silu_back(g_a2, "a2")
    temb_back(g_pre2, "t2")
    g_s1 = conv_back(g_pre2, "pre2", "d2")
    g_s1 = g_s1 + g_s1_skip

    g_h1 = silu_back(g_s1, "s1")
    g_a1 = conv_back(g_h1, "h1", "e1b")
    g_pre1 = silu_back(g_a1, "a1")
    temb_back(g_pre1, "t1")
    g_s0 = conv_back(g_pre1, "pre1", "d1")
    g_s0 = g_s0 + g_s0_skip

    g_h0 = silu_back(g_s0, "s0")
    g_a0 = conv_back(g_h0, "h0", "e0b")
    g_pre0 = silu_back(g_a0, "a0")
    temb_back(g_pre0, "t0")
    g_x = conv_back(g_pre0, "pre0", "e0a")

    g_planes = g_x[:, IN_CHANNELS - TOKEN_CHANNELS :].sum(axis=(2, 3))
    g_tsum_in, grads["ti_w"], grads["ti_b"] = linear_backward(
        g_planes, cache["tsum"], params["ti_w"]
    )
    tokens = cache["tokens"]
    grads["emb"] = embedding_sum_backward(
        g_tsum + g_tsum_in, tokens, params["emb"].shape[0], params["emb"].shape[1]
    )
    return grads
