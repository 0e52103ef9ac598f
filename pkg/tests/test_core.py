import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dacl.core import (ContrastiveConfig, EncoderConfig, EncoderParams, LatentPools, encode, encoder_backward,
                       init_encoder, sample_triplet, sample_triplets, timestep_embedding, train_dacl,
                       triplet_loss, view_distances, diffusion_views)
from dacl.diffusion import TimestepRange, make_schedule
from dacl.errors import ConfigError, DataError, ShapeError
from dacl.numkit import Rng

from gradchecks import dacl_pipeline_point
from oracles import central_diff_grad, gelu_scalar, max_rel_error, mlp_forward_loops, sinusoid_loop

finite = st.floats(-10, 10, allow_nan=False)


def test_timestep_embedding_at_zero():
    e = timestep_embedding(0, 8)
    assert np.all(e[0::2] == 0.0) and np.all(e[1::2] == 1.0)


def test_timestep_embedding_matches_loop_and_distinguishes():
    np.testing.assert_allclose(timestep_embedding(7, 16), sinusoid_loop(7, 16), rtol=1e-14, atol=1e-15)
    assert timestep_embedding(3, 16).tobytes() == timestep_embedding(3, 16).tobytes()
    assert np.linalg.norm(timestep_embedding(1, 16) - timestep_embedding(50, 16)) > 0.1


def test_timestep_embedding_frequency_span():
    # slowest pair has period 2*pi*1e4: at t=1 the phase is 1e-4
    e = timestep_embedding(1, 64)
    assert e[0] == pytest.approx(np.sin(1.0))
    assert e[-2] == pytest.approx(np.sin(1e-4), rel=1e-12)


@pytest.mark.parametrize("dim", [0, 3, 7])
def test_timestep_embedding_odd_dim(dim):
    with pytest.raises(ConfigError):
        timestep_embedding(1, dim)


def test_encoder_zero_last_layer_and_determinism():
    p = init_encoder(32, EncoderConfig(), Rng(0))
    z = Rng(1).normal(3, 32)
    a, b = encode(p, z, np.array([1, 2, 3])), encode(p, z, np.array([1, 2, 3]))
    assert a.shape == (3, 128) and a.tobytes() == b.tobytes()
    p.trunk.weights[-1][:] = 0.0
    assert np.all(encode(p, z, 5) == 0.0)


def test_encoder_matches_loop_oracle():
    cfg = EncoderConfig(temb_dim=4, hidden=(5,), embed_dim=3)
    rng = Rng(2)
    p = init_encoder(2, cfg, rng)
    z = rng.normal(1, 2)[0]
    x = np.concatenate([z, sinusoid_loop(9, 4)])
    np.testing.assert_allclose(encode(p, z, 9), mlp_forward_loops(p.trunk.weights, p.trunk.biases, x, gelu_scalar),
                               rtol=1e-12, atol=1e-14)


def test_encoder_shape_error():
    p = init_encoder(32, EncoderConfig(), Rng(0))
    with pytest.raises(ShapeError):
        encode(p, np.zeros(31), 1)


def test_normalized_encoder_gradient():
    cfg = EncoderConfig(temb_dim=4, hidden=(6,), embed_dim=3, normalize=True)
    rng = Rng(3)
    p = init_encoder(2, cfg, rng)
    z = rng.normal(4, 2)
    up = rng.normal(4, 3)
    e, cache = encode(p, z, 2, return_cache=True)
    assert np.allclose(np.linalg.norm(e, axis=1), 1.0)
    grads, dz = encoder_backward(p, cache, up)

    def f():
        return float(np.sum(up * encode(p, z, 2)))

    arrays = p.trunk.weights + p.trunk.biases
    analytic = np.concatenate([g.ravel() for g in grads.weights + grads.biases])
    assert max_rel_error(analytic, central_diff_grad(f, arrays)) < 1e-4
    assert max_rel_error(dz.ravel(), central_diff_grad(f, [z])) < 1e-4


@pytest.mark.parametrize("eA, eP, eN, expected", [
    ((0, 0), (0, 0), (2, 0), 0.0),
    ((0, 0), (0, 0), (0, 0), 1.0),
    ((0, 0), (1, 0), (1, 0), 1.0),
])
def test_triplet_loss_hand_values(eA, eP, eN, expected):
    assert triplet_loss(np.array(eA, float), np.array(eP, float), np.array(eN, float), 1.0) == expected


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), st.floats(0.0, 5.0))
def test_triplet_loss_nonnegative_and_collapse_equals_margin(e, m):
    assert triplet_loss(e[0], e[1], e[2], m) >= 0.0
    assert triplet_loss(e[0], e[0], e[0], m) == pytest.approx(m)


def test_pipeline_gradient_matches_finite_differences():
    for seed in range(3):
        assert dacl_pipeline_point(seed) < 1e-4


def test_sample_triplet_singleton_pools():
    a, b = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
    pools = LatentPools(np.vstack([a, b]), np.array([0, 1]))
    rng = Rng(0)
    for _ in range(50):
        t = sample_triplet(pools, rng)
        got = (tuple(t.z0_anchor), tuple(t.z0_positive), tuple(t.z0_negative))
        assert got in {(tuple(a), tuple(a), tuple(b)), (tuple(b), tuple(b), tuple(a))}


def test_triplet_frequencies_and_invariants():
    z = np.random.default_rng(0).normal(size=(200, 3))
    labels = np.arange(200) % 2
    pools = LatentPools(z, labels)
    t = sample_triplets(pools, Rng(1), 10_000)
    assert abs(t.label_anchor.mean() - 0.5) < 0.05
    assert np.all(t.label_negative != t.label_anchor)
    assert t.z0_positive.tobytes() == t.z0_anchor.tobytes()


def test_balanced_mode_on_imbalanced_pools():
    labels = np.array([0] * 90 + [1] * 10)
    pools = LatentPools(np.random.default_rng(0).normal(size=(100, 2)), labels)
    plain = sample_triplets(pools, Rng(2), 10_000)
    bal = sample_triplets(pools, Rng(2), 10_000, balanced=True)
    assert abs(plain.label_anchor.mean() - 0.1) < 0.02
    assert abs(bal.label_anchor.mean() - 0.5) < 0.03


def test_single_class_is_a_data_error():
    with pytest.raises(DataError):
        LatentPools(np.zeros((4, 2)), np.zeros(4))


def _separable(seed=0, n=120, d=32):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    z = rng.normal(size=(n, d)) + np.where(labels[:, None] == 1, 3.0, -3.0)
    return z, labels


def test_margin_zero_loss_is_zero_and_nonnegative():
    z, y = _separable()
    cfg = ContrastiveConfig(epochs=3, margin=0.0)
    _, hist = train_dacl(z, y, make_schedule(), TimestepRange(1, 50), cfg, seed=0)
    assert all(v >= 0.0 for v in hist.loss)
    assert hist.loss[-1] == 0.0


def test_training_determinism_and_independent_timesteps():
    z, y = _separable(n=80)
    cfg = ContrastiveConfig(epochs=3)
    p1, h1 = train_dacl(z, y, make_schedule(), TimestepRange(1, 50), cfg, seed=5)
    p2, h2 = train_dacl(z, y, make_schedule(), TimestepRange(1, 50), cfg, seed=5)
    assert h1.loss == h2.loss
    assert all(a.tobytes() == b.tobytes() for a, b in zip(p1.trunk.weights, p2.trunk.weights))
    assert not np.array_equal(h1.last_t_anchor, h1.last_t_positive)
    assert len(h1.last_t_anchor) == 2 * cfg.batch_size  # ceil(80 / 64) steps


def test_training_reduces_loss_with_higher_lr():
    z, y = _separable(n=200)
    z = z / 6.0  # pull the clusters into hinge range
    cfg = ContrastiveConfig(epochs=30, lr=1e-3)
    _, hist = train_dacl(z, y, make_schedule(), TimestepRange(1, 50), cfg, seed=0)
    assert hist.loss[-1] < 0.25 * hist.loss[0]


def test_view_distances_are_reproducible():
    z, y = _separable(n=40)
    p = init_encoder(32, EncoderConfig(), Rng(0))
    views = diffusion_views(make_schedule(), TimestepRange(1, 50))
    a = view_distances(p, z[y == 0], z[y == 1], views, Rng(9))
    b = view_distances(p, z[y == 0], z[y == 1], views, Rng(9))
    assert a == b


def test_params_round_trip():
    p = init_encoder(32, EncoderConfig(), Rng(4))
    back = EncoderParams.from_dict(p.to_dict())
    z = Rng(5).normal(2, 32)
    assert p.embed(z).tobytes() == back.embed(z).tobytes()


def test_config_validation():
    with pytest.raises(ConfigError):
        ContrastiveConfig(margin=-1).validate()
