import numpy as np
import pytest

from environment import ArenaEnv
from networks import Adam, PolicyNetwork, gradient_check, softmax
from ppo import (VARIANTS, Batch, TrainCoeffs, TrainingDivergedError, beta_from_weights, blend_advantage,
                 calibration_loss, calibration_metrics, compute_losses, factor_returns_advantages, gae,
                 linear_schedule, normalize_advantages, resolve_variant, update)
from rollout import RolloutBuffer, collect_rollout
from scm import FACTORS, N_FACTORS

OBS, ACTIONS, STEPS = 10, 6, 48


def _brute_force_gae(rewards, values, bootstrap, gamma, lam):
    T = len(rewards)
    nxt = np.append(values[1:], bootstrap)
    deltas = rewards + gamma * nxt - values
    return np.array([sum((gamma * lam) ** i * deltas[t + i] for i in range(T - t)) for t in range(T)])


def test_gae_matches_double_sum():
    rng = np.random.default_rng(0)
    rewards, values = rng.normal(size=20), rng.normal(size=20)
    got = gae(rewards, values, np.zeros(20, dtype=bool), 0.7, 0.99, 0.95)
    np.testing.assert_allclose(got, _brute_force_gae(rewards, values, 0.7, 0.99, 0.95), atol=1e-12)


def test_gae_stops_at_episode_boundaries():
    rng = np.random.default_rng(1)
    rewards, values = rng.normal(size=10), rng.normal(size=10)
    dones = np.zeros(10, dtype=bool)
    dones[3] = True
    got = gae(rewards, values, dones, 0.4, 0.9, 0.8)
    np.testing.assert_allclose(got[:4], _brute_force_gae(rewards[:4], values[:4], 0.0, 0.9, 0.8), atol=1e-12)
    np.testing.assert_allclose(got[4:], _brute_force_gae(rewards[4:], values[4:], 0.4, 0.9, 0.8), atol=1e-12)
    with pytest.raises(ValueError):
        gae(rewards, values[:5], dones, 0.0, 0.9, 0.8)


def _synthetic_buffer(net, seed=0, done_every=16):
    rng = np.random.default_rng(seed)
    buffer = RolloutBuffer(STEPS, obs_dim=OBS, n_actions=ACTIONS)
    for t in range(STEPS):
        obs = rng.uniform(size=OBS)
        mask = rng.uniform(size=ACTIONS) < 0.7
        mask[0] = True
        action, extra = net.act(obs, mask, rng)
        eps = rng.normal(size=N_FACTORS)
        buffer.add(obs, mask, action, extra['log_prob'], rng.normal(), eps + 0.1 * rng.normal(size=N_FACTORS),
                   eps, extra['value'], extra['factor_values'], extra['gate'], (t + 1) % done_every == 0)
    buffer.set_bootstrap(0.0, np.zeros(N_FACTORS))
    return buffer


@pytest.fixture
def net():
    return PolicyNetwork(obs_dim=OBS, n_actions=ACTIONS, hidden=(16, 16), gate_hidden=8, seed=1)


def test_factor_advantages_are_channelwise_gae(net):
    buffer = _synthetic_buffer(net)
    G, A = factor_returns_advantages(buffer, 0.99, 0.95)
    for k in range(N_FACTORS):
        expected = gae(buffer.factor_rewards[:, k], buffer.factor_values[:, k], buffer.dones, 0.0, 0.99, 0.95)
        np.testing.assert_allclose(A[:, k], expected)
    np.testing.assert_allclose(G, A + buffer.factor_values)


def test_blend_extremes():
    a = np.array([1.0, -2.0])
    ak = np.arange(12.0).reshape(2, 6)
    beta = np.zeros(6)
    np.testing.assert_allclose(blend_advantage(a, ak, np.zeros(2), beta), a)
    np.testing.assert_allclose(blend_advantage(a, ak, np.ones(2), beta), ak.mean(axis=1))
    np.testing.assert_allclose(blend_advantage(a, ak, np.full(2, 0.5), beta), 0.5 * a + 0.5 * ak.mean(axis=1))


def test_normalize_advantages():
    normed, mean, std = normalize_advantages(np.array([1.0, 2.0, 3.0]))
    assert mean == 2.0
    assert normed.mean() == pytest.approx(0.0)
    _, _, std = normalize_advantages(np.full(4, 3.0))
    assert std == 1.0


def test_calibration_loss_values_and_gradient():
    rng = np.random.default_rng(2)
    eps = rng.normal(size=(32, N_FACTORS))
    loss, _ = calibration_loss(2.0 * eps + 1.0, eps)
    assert loss == pytest.approx(-1.0, abs=1e-6)
    loss, _ = calibration_loss(-eps, eps)
    assert loss == pytest.approx(1.0, abs=1e-6)

    params = {'a': rng.normal(size=(32, N_FACTORS))}
    assert gradient_check(lambda p: calibration_loss(p['a'], eps), params, probes_per_param=40) < 1e-4
    with pytest.raises(ValueError):
        calibration_loss(np.zeros((1, N_FACTORS)), np.zeros((1, N_FACTORS)))


def test_calibration_loss_is_finite_on_constant_factors():
    eps = np.random.default_rng(3).normal(size=(8, N_FACTORS))
    loss, grad = calibration_loss(np.zeros((8, N_FACTORS)), eps)
    assert np.isfinite(loss) and np.all(np.isfinite(grad))
    assert loss == pytest.approx(0.0)


def test_beta_from_weights_floors_negatives():
    w = np.array([0.5, -1.0, 0.25, 0.25, 0.0, 1.0])
    mix = softmax(beta_from_weights(w))
    floored = np.maximum(w, 1e-3)
    np.testing.assert_allclose(mix, floored / floored.sum())


def _batch(net, buffer, coeffs):
    a_scalar = gae(buffer.rewards, buffer.values, buffer.dones, 0.0, coeffs.gamma, coeffs.lam)
    G, A = factor_returns_advantages(buffer, coeffs.gamma, coeffs.lam)
    noise = np.random.default_rng(9).uniform(-0.05, 0.05, size=STEPS)
    return Batch(obs=buffer.obs, masks=buffer.masks, actions=buffer.actions,
                 old_log_probs=buffer.log_probs + noise, returns=a_scalar + buffer.values,
                 factor_returns=G, a_scalar=a_scalar, a_factor=A, eps=buffer.epsilons)


def test_full_objective_gradient(net):
    rng = np.random.default_rng(4)
    net.params['gate.W1'] = rng.normal(scale=0.5, size=net.params['gate.W1'].shape)
    net.params['beta'] = rng.normal(size=N_FACTORS)
    coeffs = TrainCoeffs(c_e=0.01)
    batch = _batch(net, _synthetic_buffer(net), coeffs)

    def loss_fn(params):
        net.params = params
        losses, grads = compute_losses(net, batch, coeffs, c_h=0.01, gate_mode='learned', norm=(0.1, 1.3))
        return losses['total'], grads

    assert gradient_check(loss_fn, net.params, probes_per_param=6) < 1e-4


ISOLATED_TERMS = {
    'policy': (dict(c_v=0.0, c_f=0.0, c_c=0.0, c_e=0.0), 0.0),
    'value': (dict(c_v=1.0, c_f=0.0, c_c=0.0, c_e=0.0), 0.0),
    'factor': (dict(c_v=0.0, c_f=1.0, c_c=0.0, c_e=0.0), 0.0),
    'calibration': (dict(c_v=0.0, c_f=0.0, c_c=1.0, c_e=0.0), 0.0),
    'entropy': (dict(c_v=0.0, c_f=0.0, c_c=0.0, c_e=0.0), 0.05),
    'gate_entropy': (dict(c_v=0.0, c_f=0.0, c_c=0.0, c_e=0.05), 0.0),
}


@pytest.mark.parametrize('term', sorted(ISOLATED_TERMS))
def test_each_objective_term_gradient(net, term):
    overrides, c_h = ISOLATED_TERMS[term]
    rng = np.random.default_rng(6)
    net.params['gate.W1'] = rng.normal(scale=0.5, size=net.params['gate.W1'].shape)
    net.params['beta'] = rng.normal(size=N_FACTORS)
    coeffs = TrainCoeffs(**overrides)
    batch = _batch(net, _synthetic_buffer(net), coeffs)
    if term != 'policy':
        # zero advantages switch the surrogate off
        batch = Batch(**{**batch.__dict__, 'a_scalar': np.zeros_like(batch.a_scalar),
                         'a_factor': np.zeros_like(batch.a_factor)})
    norm = (0.1, 1.3) if term == 'policy' else (0.0, 1.0)

    def loss_fn(params):
        net.params = params
        losses, grads = compute_losses(net, batch, coeffs, c_h=c_h, gate_mode='learned', norm=norm)
        return losses['total'], grads

    losses, _ = compute_losses(net, batch, coeffs, c_h=c_h, gate_mode='learned', norm=norm)
    assert losses[term] != 0.0
    if term != 'policy':
        assert losses['policy'] == 0.0
    assert gradient_check(loss_fn, net.params, probes_per_param=6) < 1e-4


def test_zero_gate_ignores_factor_channel(net):
    coeffs = TrainCoeffs(c_f=0.0, c_c=0.0)
    batch = _batch(net, _synthetic_buffer(net), coeffs)
    losses, grads = compute_losses(net, batch, coeffs, 0.01, gate_mode='zero')
    scrambled = Batch(**{**batch.__dict__, 'a_factor': batch.a_factor[::-1] * 5.0, 'eps': batch.eps * -1.0})
    losses2, grads2 = compute_losses(net, scrambled, coeffs, 0.01, gate_mode='zero')
    assert losses['policy'] == losses2['policy']
    np.testing.assert_array_equal(grads['actor.W0'], grads2['actor.W0'])
    np.testing.assert_array_equal(grads['beta'], np.zeros(N_FACTORS))
    assert not np.any(grads['gate.W0'])


def test_scalar_variants_share_a_trajectory(net):
    coeffs = TrainCoeffs(epochs=2, minibatch=16)
    buffer = _synthetic_buffer(net)
    results = []
    for variant in ('ppo', 'scalar_only', 'causal'):
        copy = net.copy()
        update(buffer, copy, Adam(), coeffs, variant, seed=3)
        results.append(copy.params)
    for other in results[1:]:
        for name in results[0]:
            np.testing.assert_array_equal(results[0][name], other[name])


def test_update_metrics_and_variants(net):
    coeffs = TrainCoeffs(epochs=2, minibatch=16)
    buffer = _synthetic_buffer(net)
    for variant in VARIANTS:
        copy = net.copy()
        before = copy.params['actor.W0'].copy()
        _, metrics = update(buffer, copy, Adam(), coeffs, variant, progress=0.5, seed=0, update_index=2)
        assert np.isfinite(metrics['total'])
        assert metrics['variant'] == variant and metrics['update'] == 2
        assert set(metrics['credit_share']) == set(FACTORS)
        assert not np.array_equal(before, copy.params['actor.W0'])
    with pytest.raises(ValueError):
        resolve_variant('ppg', coeffs)


def test_non_finite_rewards_raise(net):
    buffer = _synthetic_buffer(net)
    buffer.rewards[5] = np.nan
    with pytest.raises(TrainingDivergedError):
        update(buffer, net, Adam(), TrainCoeffs(epochs=1, minibatch=16), 'cgfa')


def test_calibration_metrics_credit_share_dominance():
    rng = np.random.default_rng(5)
    a_factor = 0.01 * rng.normal(size=(200, N_FACTORS))
    a_factor[:, FACTORS.index('tempo')] = 10 * rng.normal(size=200)
    metrics = calibration_metrics(a_factor, a_factor.copy(), np.zeros(N_FACTORS), np.full(200, 0.5))
    assert metrics['credit_share']['tempo'] > 0.9
    assert metrics['correlation']['tempo'] == pytest.approx(1.0)
    assert metrics['gate_mean'] == 0.5


def test_linear_schedule_clamps():
    assert linear_schedule(1.0, 0.0, 0.25) == 0.75
    assert linear_schedule(1.0, 0.0, 2.0) == 0.0


def test_rollout_against_the_arena():
    env = ArenaEnv('mono_red_aggro', ['azorius_control'], seed=0, turn_cap=6)
    net = PolicyNetwork(hidden=(16, 16), seed=0)
    buffer = RolloutBuffer(96)
    obs, info = env.reset()
    seen = []
    obs, info, episodes = collect_rollout(env, net, buffer, np.random.default_rng(0), obs, info, on_step=seen.append)
    assert buffer.full and len(seen) == 96
    assert buffer.dones.sum() == len(episodes)
    assert np.all(buffer.masks[np.arange(96), buffer.actions])
    if buffer.dones[-1]:
        assert buffer.bootstrap_value == 0.0
    _, metrics = update(buffer, net, Adam(), TrainCoeffs(epochs=1, minibatch=32), 'cgfa')
    assert np.isfinite(metrics['total'])
