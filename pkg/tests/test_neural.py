import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_spkr.errors import InsufficientDataError, ValidationError
from hybrid_spkr.neural import (
    MlpModel,
    TrainConfig,
    accumulate_similarity,
    compress_impostors,
    forward,
    init_model,
    jacobian,
    lm_fit,
    mlp_identify,
    multistart_train,
)

XOR_POS = np.array([[0.0, 0.0], [1.0, 1.0]])
XOR_NEG = np.array([[0.0, 1.0], [1.0, 0.0]])


def zero_model(n_i=12, n_h1=16, b2=0.0):
    return MlpModel(np.zeros((n_h1, n_i)), np.zeros(n_h1), np.zeros(n_h1), b2)


def random_model(rng, n_i=12, n_h1=16, scale=1.0):
    return MlpModel(rng.normal(0, scale, (n_h1, n_i)), rng.normal(0, scale, n_h1),
                    rng.normal(0, scale, n_h1), float(rng.normal(0, scale)))


def loop_forward(m: MlpModel, x) -> float:
    out = m.b2
    for j in range(m.n_h1):
        z = m.b1[j]
        for k in range(m.n_i):
            z += m.w1[j, k] * x[k]
        out += m.w2[j] / (1.0 + math.exp(-z))
    return 1.0 / (1.0 + math.exp(-out))


def test_zero_network_outputs_half(rng):
    assert forward(zero_model(), rng.standard_normal(12)) == 0.5


def test_output_monotone_in_b2(rng):
    x = rng.standard_normal(12)
    m = random_model(rng)
    outs = [forward(m.with_params(np.concatenate([m.flat()[:-1], [b]])), x) for b in (-1.0, 0.0, 0.5, 2.0)]
    assert all(a < b for a, b in zip(outs, outs[1:]))


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_scalar_loops(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    x = rng.standard_normal(12)
    assert abs(forward(m, x) - loop_forward(m, x)) <= 1e-12


def test_forward_batch_equals_rows(rng):
    m = random_model(rng)
    xs = rng.standard_normal((5, 12))
    np.testing.assert_allclose(forward(m, xs), [forward(m, x) for x in xs], rtol=0, atol=1e-15)


def test_forward_dimension_mismatch(rng):
    with pytest.raises(ValidationError):
        forward(random_model(rng), np.zeros(11))


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_output_strictly_inside_unit_interval(seed):
    rng = np.random.default_rng(seed)
    y = forward(random_model(rng, scale=0.5), rng.standard_normal((10, 12)))
    assert np.all((y > 0) & (y < 1))


def numeric_jacobian(m, x, h=1e-6):
    theta = m.flat()
    cols = []
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        cols.append((forward(m.with_params(tp), x) - forward(m.with_params(tm), x)) / (2 * h))
    return np.stack(cols, axis=1)


@pytest.mark.parametrize("seed", range(5))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n_i=4, n_h1=5)
    x = rng.standard_normal((6, 4))
    _, jac = jacobian(m, x)
    num = numeric_jacobian(m, x)
    assert np.all(np.abs(jac - num) <= 1e-5 * np.maximum(np.abs(num), 1e-3))


def test_accepted_steps_decrease_sse(rng):
    x = np.concatenate([rng.normal(0.5, 1, (40, 3)), rng.normal(-0.5, 1, (40, 3))])
    t = np.concatenate([np.ones(40), np.zeros(40)])
    run = lm_fit(init_model(3, 4, rng), x, t, 30, TrainConfig())
    assert len(run.history) > 1
    assert all(b < a for a, b in zip(run.history, run.history[1:]))


def test_stalled_run_returns_model():
    # targets already met exactly: no step can lower the SSE
    m = zero_model(2, 2)
    run = lm_fit(m, np.zeros((4, 2)), np.full(4, 0.5), 5, TrainConfig(mu_max=1e3))
    assert run.stalled
    assert run.model is m
    assert run.sse == 0.0


def test_xor_solved():
    res = multistart_train(XOR_POS, XOR_NEG, TrainConfig(n_hidden=4, seed=0))
    assert np.all(forward(res.model, XOR_POS) > 0.5)
    assert np.all(forward(res.model, XOR_NEG) < 0.5)


def test_multistart_selection_invariant(rng):
    x_pos = rng.normal(0.3, 1, (30, 3))
    x_neg = rng.normal(-0.3, 1, (30, 3))
    res = multistart_train(x_pos, x_neg, TrainConfig(n_hidden=4, seed=3))
    warm = [r.sse for r in res.warmup]
    assert res.chosen == int(np.argmin(warm))
    assert all(res.final.sse <= w for w in warm)
    assert res.model.train_sse == res.final.sse


def test_separable_gaussians_12d():
    rng = np.random.default_rng(7)
    mu = np.zeros(12)
    mu[:3] = 1.5
    pos = rng.normal(mu, 0.5, (300, 12))
    neg = rng.normal(-mu, 0.5, (300, 12))
    # margin check along the mean-difference direction before training
    proj_pos, proj_neg = pos @ mu, neg @ mu
    assert proj_pos.min() > proj_neg.max()
    model = multistart_train(pos, neg, TrainConfig(seed=1)).model
    assert forward(model, pos).mean() > 0.9
    assert forward(model, neg).mean() < 0.1


def test_training_is_deterministic(rng):
    pos = rng.normal(0.5, 1, (40, 12))
    neg = rng.normal(-0.5, 1, (40, 12))
    a = multistart_train(pos, neg, TrainConfig(seed=11, final_epochs=5)).model
    b = multistart_train(pos, neg, TrainConfig(seed=11, final_epochs=5)).model
    assert a.flat().tobytes() == b.flat().tobytes()


def test_normalize_option(rng):
    pos = rng.normal(100.5, 1, (40, 3))
    neg = rng.normal(99.5, 1, (40, 3))
    m = multistart_train(pos, neg, TrainConfig(n_hidden=4, normalize=True, seed=2)).model
    assert m.x_mean is not None
    assert forward(m, pos).mean() > forward(m, neg).mean()
    assert MlpModel.from_dict(m.to_dict()).to_dict() == m.to_dict()


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(mu_factor=1.0)
    with pytest.raises(ValidationError):
        TrainConfig(n_starts=0)


def test_empty_training_sets():
    with pytest.raises(ValidationError):
        multistart_train(np.zeros((0, 12)), np.ones((3, 12)))


# --- impostor compression ---


def test_compress_count(rng):
    out = compress_impostors(rng.standard_normal((1000, 12)), 128, seed=1)
    assert out.shape == (128, 12)


def test_compress_non_power_of_two(rng):
    out = compress_impostors(rng.standard_normal((500, 4)), 100, seed=1)
    assert out.shape == (100, 4)
    assert len({r.tobytes() for r in out}) == 100


def test_compress_full_size(rng):
    x = rng.standard_normal((64, 3))
    out = compress_impostors(x, 64, seed=0)
    assert out.shape == (64, 3)
    # each centroid sits on (a copy of) one input vector
    assert sorted(map(tuple, np.round(out, 9))) == sorted(map(tuple, np.round(x, 9)))


def test_compress_preserves_mean():
    rng = np.random.default_rng(21)
    x = rng.normal(2.0, 1.5, (2000, 12))
    out = compress_impostors(x, 128, seed=2)
    assert np.all(np.abs(out.mean(0) - x.mean(0)) <= 0.1 * x.std(0))


def test_compress_too_few(rng):
    with pytest.raises(InsufficientDataError):
        compress_impostors(rng.standard_normal((10, 3)), 20)


# --- scoring ---


def test_similarity_singleton_and_repeats(rng):
    m = random_model(rng)
    f = rng.standard_normal(12)
    assert accumulate_similarity(m, f[None, :]) == forward(m, f)
    assert accumulate_similarity(m, np.tile(f, (7, 1))) == pytest.approx(7 * forward(m, f), rel=1e-15)


def test_similarity_range(rng):
    m = random_model(rng, scale=0.3)
    frames = rng.standard_normal((25, 12))
    assert 0 < accumulate_similarity(m, frames) < 25


def test_similarity_empty(rng):
    with pytest.raises(ValidationError):
        accumulate_similarity(random_model(rng), np.zeros((0, 12)))


def test_mlp_identify(rng):
    frames = rng.standard_normal((10, 12))
    on, off = zero_model(b2=20.0), zero_model(b2=-20.0)
    assert mlp_identify(frames, [off, on])[0][0] == 1
    assert mlp_identify(frames, [on])[0][0] == 0
    ranked = mlp_identify(frames, [off, on, off, on])
    assert [r[0] for r in ranked] == [1, 3, 0, 2]


def test_model_roundtrip_byte_exact(rng):
    m = random_model(rng)
    text = json.dumps(m.to_dict())
    assert json.dumps(MlpModel.from_dict(json.loads(text)).to_dict()) == text
