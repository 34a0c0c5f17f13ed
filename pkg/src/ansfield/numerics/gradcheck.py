"""Central finite-difference verification of denoiser gradients.

Probing 160k parameters with full re-forwards would take hours; instead
each probe replaces the one interior tensor its parameter feeds (convs,
linears and the embedding are linear in their parameters, so the
perturbed tensor is the cached baseline plus an exact rank-one delta)
and re-runs only the downstream ops, with many probes batched together.
The quotient is still the literal central difference of the loss.
"""

from __future__ import annotations

import numpy as np

from .denoiser import PARAM_CUT, backward, forward, param_specs, run_chain
from .kernels import mse_backward, mse_per_item


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Dense central finite differences of scalar f at x (for small x)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = f(x)
        flat[i] = orig - h
        lm = f(x)
        flat[i] = orig
        gf[i] = (lp - lm) / (2.0 * h)
    return g


def relative_error(fd: np.ndarray, an: np.ndarray) -> float:
    """Max elementwise deviation scaled by the larger array magnitude."""
    denom = max(float(np.abs(fd).max(initial=0.0)), float(np.abs(an).max(initial=0.0)), 1e-12)
    return float(np.abs(fd - an).max(initial=0.0)) / denom


def _delta_writer(name: str, kind: str, params: dict, cache: dict, cut: str, h: float):
    """Returns (n_elems, active(e)->bool, apply(V, jp, jm, e))."""
    shape = params[name].shape
    if kind == "conv_w":
        aux = cache[cut + ":aux"]["conv"]
        cols = aux["cols"][0]  # (P, N)
        oh, ow = aux["oh"], aux["ow"]
        p_len = cols.shape[0]

        def apply(v, jp, jm, e):
            o, p = divmod(e, p_len)
            d = h * cols[p].reshape(oh, ow)
            v[jp, o] += d
            v[jm, o] -= d

        return int(np.prod(shape)), None, apply
    if kind == "conv_b":

        def apply(v, jp, jm, e):
            v[jp, e] += h
            v[jm, e] -= h

        return int(np.prod(shape)), None, apply
    if kind == "lin_w":
        temb = cache["temb"][0]
        n_in = shape[1]

        def apply(v, jp, jm, e):
            o, i = divmod(e, n_in)
            s = h * temb[i]
            v[jp, o] += s
            v[jm, o] -= s

        return int(np.prod(shape)), None, apply
    if kind == "lin_b":

        def apply(v, jp, jm, e):
            v[jp, e] += h
            v[jm, e] -= h

        return int(np.prod(shape)), None, apply
    if kind == "tok_w":
        tsum = cache["tsum"][0]
        n_in = shape[1]

        def apply(v, jp, jm, e):
            o, i = divmod(e, n_in)
            s = h * tsum[i]
            v[jp, o] += s
            v[jm, o] -= s

        return int(np.prod(shape)), None, apply
    if kind == "emb":
        tokens = cache["tokens"][0]
        dim = shape[1]
        counts = np.zeros(shape[0], dtype=np.float64)
        for tok in tokens:
            counts[tok] += 1.0

        def active(e):
            return counts[e // dim] > 0.0

        def apply(v, jp, jm, e):
            r, d = divmod(e, dim)
            s = h * counts[r]
            v[jp, d] += s
            v[jm, d] -= s

        return int(np.prod(shape)), active, apply
    raise ValueError(f"unknown param kind {kind}")


def gradcheck_denoiser(
    params: dict[str, np.ndarray],
    z_t: np.ndarray,
    t,
    cond_img: np.ndarray | None,
    tokens,
    target: np.ndarray,
    h: float = 1e-5,
    chunk: int = 128,
) -> dict[str, float]:
    """Per-array relative error between reverse-mode gradients of
    MSE(denoiser(z_t,...), target) and central finite differences over
    every parameter element. Batch size must be 1."""
    if z_t.shape[0] != 1:
        raise ValueError("gradcheck runs at batch size 1")
    cache: dict = {}
    out = forward(params, z_t, t, cond_img, tokens, cache=cache)
    analytic = backward(params, cache, mse_backward(out, target))

    n_tokens = params["emb"].shape[0]
    errors: dict[str, float] = {}
    for name, _ in param_specs(n_tokens):
        cut, kind = PARAM_CUT[name]
        base = cache[cut]
        size = params[name].size
        n, active, apply = _delta_writer(name, kind, params, cache, cut, h)
        assert n == size
        elems = [e for e in range(size) if active is None or active(e)]
        fd = np.zeros(size, dtype=np.float64)
        for lo in range(0, len(elems), chunk):
            batch_elems = elems[lo : lo + chunk]
            m = len(batch_elems)
            v = np.repeat(base, 2 * m, axis=0)
            for j, e in enumerate(batch_elems):
                apply(v, 2 * j, 2 * j + 1, e)
            outs = run_chain(params, cache, base=cache, start=cut, start_value=v)
            losses = mse_per_item(outs, target)
            fd[batch_elems] = (losses[0::2] - losses[1::2]) / (2.0 * h)
        errors[name] = relative_error(fd, analytic[name].reshape(-1))
    return errors
