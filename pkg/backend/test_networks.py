import numpy as np
import pytest

from networks import (Adam, PolicyNetwork, clip_by_global_norm, global_norm, gradient_check, init_mlp,
                      masked_log_softmax, mlp_backward, mlp_forward, orthogonal)

OBS, ACTIONS = 12, 8


@pytest.fixture
def small_net():
    return PolicyNetwork(obs_dim=OBS, n_actions=ACTIONS, hidden=(16, 16), gate_hidden=8, seed=3)


@pytest.fixture
def batch():
    rng = np.random.default_rng(0)
    obs = rng.uniform(size=(5, OBS))
    mask = rng.uniform(size=(5, ACTIONS)) < 0.6
    mask[:, 0] = True
    return obs, mask


def test_orthogonal_columns():
    W = orthogonal((32, 16), 1.0, np.random.default_rng(0))
    np.testing.assert_allclose(W.T @ W, np.eye(16), atol=1e-10)


def test_orthogonal_wide_layers_are_contiguous_rows():
    W = orthogonal((12, 16), 1.0, np.random.default_rng(0))
    assert W.flags['C_CONTIGUOUS']
    np.testing.assert_allclose(W @ W.T, np.eye(12), atol=1e-10)


def test_gradient_check_perturbs_non_contiguous_params():
    rng = np.random.default_rng(1)
    params = {'W': np.asfortranarray(rng.normal(size=(3, 4)))}
    target = rng.normal(size=(3, 4))

    def loss_fn(p):
        diff = p['W'] - target
        return 0.5 * float(np.sum(diff ** 2)), {'W': diff}

    def wrong_fn(p):
        loss, grads = loss_fn(p)
        return loss, {'W': 2.0 * grads['W']}

    assert gradient_check(loss_fn, params, probes_per_param=12) < 1e-6
    assert gradient_check(wrong_fn, params, probes_per_param=12) > 0.4


def test_masked_log_softmax(batch):
    _, mask = batch
    logits = np.random.default_rng(1).normal(size=mask.shape)
    logp = masked_log_softmax(logits, mask)
    assert np.all(np.isneginf(logp[~mask]))
    np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        masked_log_softmax(np.zeros(ACTIONS), np.zeros(ACTIONS, dtype=bool))


def test_initial_outputs(small_net, batch):
    obs, mask = batch
    out = small_net.forward(obs, mask)
    np.testing.assert_allclose(out['gate'], 0.5)
    assert out['value'].shape == (5,)
    assert out['factor_values'].shape == (5, 6)
    np.testing.assert_allclose(small_net.mixture_weights(), np.full(6, 1 / 6))
    assert np.all(out['probs'][~mask] == 0.0)


def test_act_only_picks_legal_actions(small_net, batch):
    obs, mask = batch
    rng = np.random.default_rng(2)
    for row in range(len(obs)):
        for _ in range(20):
            action, extra = small_net.act(obs[row], mask[row], rng)
            assert mask[row, action]
            assert np.isfinite(extra['log_prob'])
        greedy, _ = small_net.act(obs[row], mask[row], rng, greedy=True)
        assert mask[row, greedy]


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    params = {}
    init_mlp(params, 'm', [5, 7, 3], rng)
    x = rng.normal(size=(4, 5))
    target = rng.normal(size=(4, 3))

    def loss_fn(p):
        out, cache = mlp_forward(p, 'm', x)
        diff = out - target
        grads = {}
        mlp_backward(p, 'm', cache, diff, grads)
        return 0.5 * float(np.sum(diff ** 2)), grads

    assert gradient_check(loss_fn, params) < 1e-4


def test_policy_network_backward_matches_finite_differences(small_net, batch):
    obs, mask = batch
    rng = np.random.default_rng(5)
    a = rng.normal(size=(5, ACTIONS))
    b = rng.normal(size=(5, 7))
    c = rng.normal(size=5)
    # break the zero gate output layer so every gate weight carries gradient
    small_net.params['gate.W1'] = rng.normal(scale=0.5, size=small_net.params['gate.W1'].shape)

    def loss_fn(params):
        small_net.params = params
        out = small_net.forward(obs, mask, keep_cache=True)
        cache = out['cache']
        logits = cache['actor'][-1]
        heads = cache['heads'][-1]
        gate_logit = cache['gate'][-1][:, 0]
        loss = 0.5 * np.sum(a * logits ** 2) + np.sum(b * heads) + 0.5 * np.sum(c * gate_logit ** 2)
        grads = small_net.backward(cache, a * logits, b, c * gate_logit)
        return float(loss), grads

    assert gradient_check(loss_fn, small_net.params, probes_per_param=6) < 1e-4


def test_state_dict_round_trip(small_net, batch):
    obs, mask = batch
    clone = PolicyNetwork.from_state_dict(small_net.state_dict())
    np.testing.assert_array_equal(clone.forward(obs, mask)['log_probs'], small_net.forward(obs, mask)['log_probs'])
    np.testing.assert_array_equal(clone.forward(obs, mask)['value'], small_net.forward(obs, mask)['value'])


def test_adam_minimizes_a_quadratic():
    params = {'x': np.array([3.0, -2.0])}
    opt = Adam(lr=0.1)
    for _ in range(1000):
        opt.step(params, {'x': 2 * params['x']})
    assert np.abs(params["x"]).max() < 0.05
    restored = Adam.from_state_dict(opt.state_dict())
    assert restored.t == 1000


def test_clip_by_global_norm():
    grads = {'a': np.array([3.0]), 'b': np.array([4.0])}
    assert clip_by_global_norm(grads, 1.0) == pytest.approx(5.0)
    assert global_norm(grads) == pytest.approx(1.0)
    untouched = {'a': np.array([0.1])}
    clip_by_global_norm(untouched, 1.0)
    assert untouched['a'][0] == 0.1
