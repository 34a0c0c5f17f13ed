import numpy as np
import pytest

from ansfield.diffusion import (
    DiffusionModel,
    GuidanceScales,
    NoiseSchedule,
    cfg_predict,
    forward_noise,
    question_tokens,
    sample,
    token_vocab_size,
    train_step,
)
from ansfield.numerics import AdamW, init_params
from ansfield.numerics.denoiser import forward as denoiser_forward
from ansfield.numerics.denoiser import null_token
from ansfield.numerics.kernels import ShapeMismatch, mse_forward
from ansfield.qa import TEMPLATES, Question
from ansfield.scene import Scene, SceneObject, load_vocab

VOCAB = load_vocab()
CATS = tuple(VOCAB["categories"])


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


# ------------------------------------------------ schedule

def test_linear_schedule_invariants():
    s = NoiseSchedule.linear(100)
    assert s.T == 100
    assert s.betas[0] == pytest.approx(1e-4 * 10)
    assert s.betas[-1] == pytest.approx(0.02 * 10)
    assert np.all(s.betas > 0) and np.all(s.betas < 1)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert s.alpha_bar[-1] < 0.05
    assert np.allclose(s.alphas, 1.0 - s.betas)
    assert np.allclose(s.alpha_bar, np.cumprod(1.0 - s.betas))


def test_schedule_validation():
    with pytest.raises(ValueError, match="non-empty"):
        NoiseSchedule(betas=np.array([]))
    with pytest.raises(ValueError, match="inside"):
        NoiseSchedule(betas=np.array([0.1, 1.0]))
    with pytest.raises(ValueError, match="shallow"):
        NoiseSchedule(betas=np.full(10, 1e-4))


def test_schedule_arrays_read_only():
    s = NoiseSchedule.linear(50)
    with pytest.raises(ValueError):
        s.betas[0] = 0.5


# ------------------------------------------------ forward process

def test_forward_noise_inverts_exactly():
    s = NoiseSchedule.linear(100)
    rng = _rng(1)
    z0 = rng.uniform(-1, 1, size=(4, 1, 8, 8))
    eps = rng.standard_normal(z0.shape)
    t = np.array([1, 13, 57, 100])
    z_t = forward_noise(z0, t, eps, s)
    ab = s.alpha_bar[t - 1].reshape(-1, 1, 1, 1)
    eps_back = (z_t - np.sqrt(ab) * z0) / np.sqrt(1.0 - ab)
    z0_back = (z_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
    assert np.abs(eps_back - eps).max() < 1e-9
    assert np.abs(z0_back - z0).max() < 1e-9


def test_forward_noise_per_item_timesteps():
    s = NoiseSchedule.linear(100)
    z0 = np.ones((2, 1, 4, 4))
    eps = np.zeros_like(z0)
    z_t = forward_noise(z0, np.array([1, 100]), eps, s)
    assert np.allclose(z_t[0], np.sqrt(s.alpha_bar[0]))
    assert np.allclose(z_t[1], np.sqrt(s.alpha_bar[99]))


def test_forward_noise_validation():
    s = NoiseSchedule.linear(50)
    z0 = np.zeros((1, 1, 4, 4))
    with pytest.raises(ValueError, match="t must"):
        forward_noise(z0, 0, np.zeros_like(z0), s)
    with pytest.raises(ValueError, match="t must"):
        forward_noise(z0, 51, np.zeros_like(z0), s)
    with pytest.raises(ShapeMismatch):
        forward_noise(z0, 1, np.zeros((1, 1, 2, 2)), s)


def test_forward_noise_variance_monte_carlo():
    s = NoiseSchedule.linear(100)
    rng = _rng(2)
    t = 60
    eps = rng.standard_normal((20000, 1, 1, 1))
    z_t = forward_noise(np.zeros_like(eps), t, eps, s)
    assert float(z_t.var()) == pytest.approx(1.0 - s.alpha_bar[t - 1], rel=0.05)


# ------------------------------------------------ guidance

def _stub(value_uncond=0.0, value_img=1.0, value_full=2.0):
    def fn(z_t, t, cond_img, tokens):
        if cond_img is None:
            v = value_uncond
        elif tokens is None:
            v = value_img
        else:
            v = value_full
        return np.full_like(np.asarray(z_t, dtype=np.float64), v)

    return fn


def test_cfg_arithmetic():
    z = np.zeros((1, 1, 4, 4))
    cond = np.zeros((1, 3, 4, 4))
    out = cfg_predict(_stub(), z, np.array([5]), cond, ((0,),),
                      GuidanceScales())
    assert np.allclose(out, 0.0 + 1.5 * (1.0 - 0.0) + 7.0 * (2.0 - 1.0))
    out = cfg_predict(_stub(), z, np.array([5]), cond, ((0,),),
                      GuidanceScales(s_i=2.0, s_t=3.0))
    assert np.allclose(out, 5.0)


def test_cfg_identity_at_unit_scales():
    # S_i = S_t = 1 telescopes to the fully conditioned prediction.
    z = np.ones((1, 1, 4, 4))
    cond = np.zeros((1, 3, 4, 4))
    out = cfg_predict(_stub(0.3, -0.8, 1.7), z, np.array([1]), cond, ((0,),),
                      GuidanceScales(s_i=1.0, s_t=1.0))
    assert np.allclose(out, 1.7)


def test_guidance_scales_validation():
    with pytest.raises(ValueError):
        GuidanceScales(s_i=-0.1)
    with pytest.raises(ValueError):
        GuidanceScales(s_t=np.inf)
    GuidanceScales(s_i=0.0, s_t=0.0)  # zero is legal: pure unconditional


# ------------------------------------------------ sampling

def test_sample_recovers_single_mode_exactly():
    # For a dataset holding one image x*, the exact noise posterior is
    # e(z, t) = (z - sqrt(ab_t) x*) / sqrt(1 - ab_t); eta = 0 sampling
    # must then reproduce x* to float precision whatever the stride.
    sched = NoiseSchedule.linear(100)
    rng = _rng(3)
    x_star = rng.uniform(-0.95, 0.95, size=(2, 1, 8, 8))

    def oracle(z_t, t, cond_img, tokens):
        ab = sched.alpha_bar[np.asarray(t) - 1].reshape(-1, 1, 1, 1)
        return (z_t - np.sqrt(ab) * x_star) / np.sqrt(1.0 - ab)

    cond = np.zeros((2, 3, 8, 8))
    for n_steps in (1, 7, 50, 100):
        z = sample(oracle, cond, ((0,), (0,)), GuidanceScales(), n_steps,
                   _rng(4), schedule=sched)
        assert np.abs(z - x_star).max() < 1e-8, n_steps


def test_sample_deterministic_and_rng_discipline():
    sched = NoiseSchedule.linear(50)
    cond = np.zeros((1, 3, 8, 8))
    fn = _stub(0.1, 0.2, 0.3)
    a = sample(fn, cond, ((0,),), GuidanceScales(), 10, _rng(7), schedule=sched)
    b = sample(fn, cond, ((0,),), GuidanceScales(), 10, _rng(7), schedule=sched)
    assert np.array_equal(a, b)
    c = sample(fn, cond, ((0,),), GuidanceScales(), 10, _rng(8), schedule=sched)
    assert not np.array_equal(a, c)
    # The rng is consumed only for the initial draw.
    used = _rng(7)
    sample(fn, cond, ((0,),), GuidanceScales(), 10, used, schedule=sched)
    ref = _rng(7)
    ref.standard_normal((1, 1, 8, 8))
    assert used.bit_generator.state == ref.bit_generator.state


def test_sample_output_clipped_and_validated():
    sched = NoiseSchedule.linear(50)
    cond = np.zeros((1, 3, 8, 8))
    z = sample(_stub(5.0, 5.0, 5.0), cond, ((0,),), GuidanceScales(), 5,
               _rng(9), schedule=sched)
    assert z.min() >= -1.0 and z.max() <= 1.0
    with pytest.raises(ValueError, match="n_steps"):
        sample(_stub(), cond, ((0,),), GuidanceScales(), 51, _rng(0),
               schedule=sched)
    with pytest.raises(ValueError, match="n_steps"):
        sample(_stub(), cond, ((0,),), GuidanceScales(), 0, _rng(0),
               schedule=sched)


# ------------------------------------------------ tokens

def test_question_tokens_layout():
    scene = Scene(
        id="s", width=4.0, height=4.0, walls=(),
        objects=(
            SceneObject("obj_00", CATS[2], "red", (0.5, 0.5, 1.5, 1.5), True),
            SceneObject("obj_01", CATS[5], "blue", (2.5, 2.5, 3.5, 3.5), False),
        ),
    )
    q = Question("q", "WhatNextTo", "t", ("obj_00", "obj_01"), CATS[5], CATS)
    toks = question_tokens(q, scene)
    n_cats = len(VOCAB["categories"])
    red = VOCAB["colors"].index("red")
    blue = VOCAB["colors"].index("blue")
    assert toks == (
        TEMPLATES.index("WhatNextTo"),
        len(TEMPLATES) + 2,
        len(TEMPLATES) + 5,
        len(TEMPLATES) + n_cats + red,
        len(TEMPLATES) + n_cats + blue,
    )
    assert token_vocab_size() == len(TEMPLATES) + n_cats + len(VOCAB["colors"]) + 1
    assert max(toks) < token_vocab_size() - 1  # last row is the null token


# ------------------------------------------------ training step

def _train_setup(seed=11, b=3, hw=8):
    rng = _rng(seed)
    params = init_params(rng, 6)
    model = DiffusionModel(params=params, schedule=NoiseSchedule.linear(25))
    z0 = rng.uniform(-1, 1, size=(b, 1, hw, hw))
    cond = rng.uniform(-1, 1, size=(b, 3, hw, hw))
    tokens = tuple((0, i % 5) for i in range(b))
    return model, z0, cond, tokens


def test_train_step_matches_manual_replay():
    # Replaying the documented draw order (t, eps, dropout) with a clone
    # of the rng and untouched params must give the identical loss.
    for p_both, p_text, p_img in ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)):
        model, z0, cond, tokens = _train_setup()
        frozen = {k: v.copy() for k, v in model.params.items()}
        clone = _rng(99)
        b = z0.shape[0]
        t = clone.integers(1, model.schedule.T + 1, size=b)
        eps = clone.standard_normal(z0.shape)
        u = clone.random((b, 3))
        drop_text = (u[:, 0] < p_both) | (u[:, 1] < p_text)
        drop_image = (u[:, 0] < p_both) | (u[:, 2] < p_img)
        cond_used = cond.copy()
        cond_used[drop_image] = 0.0
        null = (null_token(frozen),)
        toks = tuple(null if drop_text[i] else tokens[i] for i in range(b))
        z_t = forward_noise(z0, t, eps, model.schedule)
        want = mse_forward(denoiser_forward(frozen, z_t, t, cond_used, toks), eps)

        loss = train_step(model, AdamW(lr=1e-3), z0, cond, tokens, _rng(99),
                          p_drop_both=p_both, p_drop_text=p_text,
                          p_drop_image=p_img)
        assert loss == pytest.approx(want, abs=1e-12)
        changed = any(
            not np.array_equal(model.params[k], frozen[k]) for k in frozen
        )
        assert changed


def test_train_step_overfits_single_example():
    model, z0, cond, tokens = _train_setup(seed=13, b=1)
    opt = AdamW(lr=3e-3)
    rng = _rng(5)
    first = train_step(model, opt, z0, cond, tokens, rng,
                       p_drop_both=0.0, p_drop_text=0.0, p_drop_image=0.0)
    losses = [
        train_step(model, opt, z0, cond, tokens, rng,
                   p_drop_both=0.0, p_drop_text=0.0, p_drop_image=0.0)
        for _ in range(120)
    ]
    assert float(np.mean(losses[-20:])) < 0.5 * max(first, 1e-9)
