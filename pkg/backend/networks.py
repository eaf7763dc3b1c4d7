"""Feed-forward networks with analytic gradients.

Parameters live in flat dicts of numpy arrays keyed ``<prefix>.W<i>`` and
``<prefix>.b<i>`` so that optimizers, gradient clipping, checkpointing and the
finite-difference checker all work on the same structure.
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import copy

import numpy as np

from actions import ACTION_DIM
from observe import OBS_DIM
from scm import N_FACTORS

Params = Dict[str, np.ndarray]

DESK_HIDDEN = (64, 64)
FULL_HIDDEN = (512, 256)
GATE_HIDDEN = 32
ACTOR_FINAL_SCALE = 0.01
RELU_GAIN = float(np.sqrt(2.0))
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def orthogonal(shape: Tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_mlp(params: Params, prefix: str, sizes: Sequence[int], rng: np.random.Generator,
             final_scale: float = 1.0, zero_final: bool = False) -> None:
    last = len(sizes) - 2
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == last and zero_final:
            W = np.zeros((n_in, n_out))
        else:
            W = orthogonal((n_in, n_out), RELU_GAIN if i < last else final_scale, rng)
        params[f'{prefix}.W{i}'] = W
        params[f'{prefix}.b{i}'] = np.zeros(n_out)


def n_layers(params: Params, prefix: str) -> int:
    i = 0
    while f'{prefix}.W{i}' in params:
        i += 1
    return i


def mlp_forward(params: Params, prefix: str, x: np.ndarray,
                activate_output: bool = False) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Rectified hidden layers; the output layer is linear unless `activate_output`."""
    depth = n_layers(params, prefix)
    cache = [x]
    h = x
    for i in range(depth):
        h = h @ params[f'{prefix}.W{i}'] + params[f'{prefix}.b{i}']
        if i < depth - 1 or activate_output:
            h = np.maximum(h, 0.0)
        cache.append(h)
    return h, cache


def mlp_backward(params: Params, prefix: str, cache: List[np.ndarray], dout: np.ndarray,
                 grads: Params, activate_output: bool = False) -> np.ndarray:
    """Accumulate parameter gradients into `grads`; return the input gradient."""
    depth = n_layers(params, prefix)
    d = dout
    for i in reversed(range(depth)):
        if i < depth - 1 or activate_output:
            d = d * (cache[i + 1] > 0.0)
        x = cache[i]
        grads[f'{prefix}.W{i}'] = grads.get(f'{prefix}.W{i}', 0.0) + x.T @ d
        grads[f'{prefix}.b{i}'] = grads.get(f'{prefix}.b{i}', 0.0) + d.sum(axis=0)
        d = d @ params[f'{prefix}.W{i}'].T
    return d


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax over legal entries; illegal entries are -inf."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None, :]
        logits = logits[None, :]
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError('Action mask has no legal actions')
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    return z - lse


class PolicyNetwork:
    """Masked actor, scalar and per-factor critic, residual gate and mixture logits.

    The critic trunk output feeds both value heads and the gate MLP.
    """

    def __init__(self, obs_dim: int = OBS_DIM, n_actions: int = ACTION_DIM,
                 hidden: Sequence[int] = DESK_HIDDEN, gate_hidden: int = GATE_HIDDEN,
                 n_factors: int = N_FACTORS, seed: int = 0):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        self.gate_hidden = gate_hidden
        self.n_factors = n_factors
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params: Params = {}
        init_mlp(self.params, 'actor', [obs_dim, *self.hidden, n_actions], rng, final_scale=ACTOR_FINAL_SCALE)
        init_mlp(self.params, 'critic', [obs_dim, *self.hidden], rng)
        init_mlp(self.params, 'heads', [self.hidden[-1], 1 + n_factors], rng)
        # zero output layer gives g = sigmoid(0) = 0.5 at start
        init_mlp(self.params, 'gate', [self.hidden[-1], gate_hidden, 1], rng, zero_final=True)
        self.params['beta'] = np.zeros(n_factors)

    def config(self) -> Dict[str, object]:
        return {'obs_dim': self.obs_dim, 'n_actions': self.n_actions, 'hidden': list(self.hidden),
                'gate_hidden': self.gate_hidden, 'n_factors': self.n_factors, 'seed': self.seed}

    def forward(self, obs: np.ndarray, mask: np.ndarray, keep_cache: bool = False) -> Dict[str, np.ndarray]:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        mask = np.atleast_2d(np.asarray(mask, dtype=bool))
        logits, actor_cache = mlp_forward(self.params, 'actor', obs)
        log_probs = masked_log_softmax(logits, mask)
        latent, critic_cache = mlp_forward(self.params, 'critic', obs, activate_output=True)
        heads, heads_cache = mlp_forward(self.params, 'heads', latent)
        gate_logit, gate_cache = mlp_forward(self.params, 'gate', latent)
        out = {
            'log_probs': log_probs,
            'probs': np.exp(log_probs),
            'value': heads[:, 0],
            'factor_values': heads[:, 1:],
            'gate': sigmoid(gate_logit[:, 0]),
        }
        if keep_cache:
            out['cache'] = {'actor': actor_cache, 'critic': critic_cache,
                            'heads': heads_cache, 'gate': gate_cache, 'mask': mask}
        return out

    def mixture_weights(self) -> np.ndarray:
        return softmax(self.params['beta'])

    def act(self, obs: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
            greedy: bool = False) -> Tuple[int, Dict[str, np.ndarray]]:
        out = self.forward(obs, mask)
        probs = out['probs'][0]
        if greedy:
            action = int(np.argmax(np.where(np.asarray(mask, dtype=bool), probs, -1.0)))
        else:
            action = int(rng.choice(self.n_actions, p=probs / probs.sum()))
        return action, {
            'log_prob': float(out['log_probs'][0, action]),
            'log_probs': out['log_probs'][0],
            'value': float(out['value'][0]),
            'factor_values': out['factor_values'][0],
            'gate': float(out['gate'][0]),
        }

    def backward(self, cache: Dict[str, object], d_logits: np.ndarray, d_heads: np.ndarray,
                 d_gate_logit: np.ndarray) -> Params:
        grads: Params = {}
        mlp_backward(self.params, 'actor', cache['actor'], d_logits, grads)
        d_latent = mlp_backward(self.params, 'heads', cache['heads'], d_heads, grads)
        d_latent = d_latent + mlp_backward(self.params, 'gate', cache['gate'], d_gate_logit[:, None], grads)
        mlp_backward(self.params, 'critic', cache['critic'], d_latent, grads, activate_output=True)
        return grads

    def state_dict(self) -> Dict[str, object]:
        return {'config': self.config(), 'params': {k: v.copy() for k, v in self.params.items()}}

    @classmethod
    def from_state_dict(cls, state: Dict[str, object]) -> 'PolicyNetwork':
        cfg = state['config']
        net = cls(obs_dim=cfg['obs_dim'], n_actions=cfg['n_actions'], hidden=cfg['hidden'],
                  gate_hidden=cfg['gate_hidden'], n_factors=cfg['n_factors'], seed=cfg['seed'])
        net.params = {k: np.array(v, dtype=float) for k, v in state['params'].items()}
        return net

    def copy(self) -> 'PolicyNetwork':
        return copy.deepcopy(self)


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, lr: float = 3e-4, betas: Tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Params, lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(params[name]))
            v = self.v.setdefault(name, np.zeros_like(params[name]))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> Dict[str, object]:
        return {'lr': self.lr, 'betas': (self.beta1, self.beta2), 'eps': self.eps, 't': self.t,
                'm': {k: v.copy() for k, v in self.m.items()}, 'v': {k: v.copy() for k, v in self.v.items()}}

    @classmethod
    def from_state_dict(cls, state: Dict[str, object]) -> 'Adam':
        opt = cls(lr=state['lr'], betas=tuple(state['betas']), eps=state['eps'])
        opt.t = int(state['t'])
        opt.m = {k: np.array(v) for k, v in state['m'].items()}
        opt.v = {k: np.array(v) for k, v in state['v'].items()}
        return opt


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Params, max_norm: float) -> float:
    """Scale `grads` in place so their joint L2 norm is at most `max_norm`; return the pre-clip norm."""
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


def gradient_check(loss_fn: Callable[[Params], Tuple[float, Params]], params: Params,
                   step: float = 1e-5, probes_per_param: int = 8, seed: int = 0,
                   abs_floor: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes a random subset of entries per parameter. Entries where both
    gradients fall below `abs_floor` are compared on an absolute scale.
    """
    rng = np.random.default_rng(seed)
    _, analytic = loss_fn(params)
    worst = 0.0
    for name, value in params.items():
        grad = np.broadcast_to(np.asarray(analytic.get(name, np.zeros_like(value)), dtype=float), value.shape)
        picks = rng.choice(value.size, size=min(probes_per_param, value.size), replace=False)
        for k in picks:
            idx = np.unravel_index(k, value.shape)
            old = value[idx]
            value[idx] = old + step
            plus, _ = loss_fn(params)
            value[idx] = old - step
            minus, _ = loss_fn(params)
            value[idx] = old
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(numeric), abs(grad[idx]), abs_floor)
            worst = max(worst, abs(numeric - grad[idx]) / denom)
    return worst
