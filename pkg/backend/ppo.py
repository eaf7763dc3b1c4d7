"""Masked PPO and the causally gated factored-advantage update.

Both updates run through `update()`: plain PPO is the same routine with
the gate forced to zero and the factor, calibration and gate-entropy
coefficients zeroed, so the two produce identical parameter trajectories
under that setting.
"""
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple
import logging

import numpy as np

from networks import Adam, Params, PolicyNetwork, clip_by_global_norm, sigmoid, softmax
from rollout import RolloutBuffer
from scm import FACTORS, N_FACTORS
from stat_tests import credit_share, pearson, sign_agreement

logger = logging.getLogger(__name__)

CALIBRATION_DELTA = 1e-6
BETA_WEIGHT_FLOOR = 1e-3
GATE_MODES = ('learned', 'fixed', 'zero')
FIXED_GATE = 0.5

# variant -> (gate mode, coefficient overrides)
# ppo, causal and scalar_only run identical updates; causal differs only by
# acting through the world model during rollouts (see model_training).
VARIANTS: Dict[str, Tuple[str, Dict[str, float]]] = {
    'ppo': ('zero', {'c_f': 0.0, 'c_c': 0.0, 'c_e': 0.0}),
    'causal': ('zero', {'c_f': 0.0, 'c_c': 0.0, 'c_e': 0.0}),
    'scalar_only': ('zero', {'c_f': 0.0, 'c_c': 0.0, 'c_e': 0.0}),
    'no_gate': ('fixed', {}),
    'no_calibration': ('learned', {'c_c': 0.0}),
    'cgfa': ('learned', {}),
}


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient goes non-finite during an update."""


@dataclass(frozen=True)
class TrainCoeffs:
    c_v: float = 0.5
    c_h_start: float = 0.05
    c_h_end: float = 0.005
    c_f: float = 0.5
    c_c: float = 0.1
    c_e: float = 0.0
    clip: float = 0.2
    gamma: float = 0.995
    lam: float = 0.95
    epochs: int = 10
    minibatch: int = 256
    n_steps: int = 2048
    grad_norm_max: float = 0.5
    lr_start: float = 3e-4
    lr_end: float = 1e-5
    delta: float = CALIBRATION_DELTA

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError('gamma must lie in (0, 1] and lambda in [0, 1]')
        if self.clip <= 0 or self.epochs < 1 or self.minibatch < 1 or self.n_steps < 1:
            raise ValueError('clip, epochs, minibatch and n_steps must be positive')


def linear_schedule(start: float, end: float, progress: float) -> float:
    progress = min(max(progress, 0.0), 1.0)
    return start + (end - start) * progress


def resolve_variant(variant: str, coeffs: TrainCoeffs) -> Tuple[str, TrainCoeffs]:
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant '{variant}'. Expected one of {list(VARIANTS)}")
    gate_mode, overrides = VARIANTS[variant]
    return gate_mode, replace(coeffs, **overrides)


# ---------------------------------------------------------------------------
# advantages

def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, bootstrap: float,
        gamma: float, lam: float) -> np.ndarray:
    """Truncated generalized advantage estimate; no bootstrapping across a done step."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError(f'length mismatch: rewards={len(rewards)} values={len(values)} dones={len(dones)}')
    T = len(rewards)
    adv = np.zeros(T)
    last = 0.0
    for t in reversed(range(T)):
        next_value = bootstrap if t == T - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
    return adv


def factor_returns_advantages(buffer: RolloutBuffer, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-factor (G_k, A_k), the scalar recursion applied channelwise against V_k."""
    T = len(buffer)
    A = np.zeros((T, N_FACTORS))
    for k in range(N_FACTORS):
        A[:, k] = gae(buffer.factor_rewards[:T, k], buffer.factor_values[:T, k], buffer.dones[:T],
                      float(buffer.bootstrap_factor_values[k]), gamma, lam)
    G = A + buffer.factor_values[:T]
    return G, A


def blend_advantage(a_scalar: np.ndarray, a_factor: np.ndarray, gate: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """(1 - g)·A + g·Σ_k softmax(β)_k·A_k."""
    w = softmax(np.asarray(beta, dtype=float))
    gate = np.asarray(gate, dtype=float)
    return (1.0 - gate) * np.asarray(a_scalar, dtype=float) + gate * (np.asarray(a_factor, dtype=float) @ w)


def normalize_advantages(adv: np.ndarray) -> Tuple[np.ndarray, float, float]:
    mean = float(np.mean(adv))
    std = float(np.std(adv))
    std = std if std > 1e-8 else 1.0
    return (adv - mean) / std, mean, std


def calibration_loss(a_factor: np.ndarray, eps: np.ndarray,
                     delta: float = CALIBRATION_DELTA) -> Tuple[float, np.ndarray]:
    """Negative mean per-factor Pearson correlation and its gradient w.r.t. `a_factor`.

    Each standard deviation is clamped below by `delta`.
    """
    x = np.asarray(a_factor, dtype=float)
    y = np.asarray(eps, dtype=float)
    n, K = x.shape
    if n < 2:
        raise ValueError('calibration loss needs a batch of at least two steps')
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    cov = (xc * yc).mean(axis=0)
    sx_raw = np.sqrt((xc ** 2).mean(axis=0))
    sx = np.maximum(sx_raw, delta)
    sy = np.maximum(np.sqrt((yc ** 2).mean(axis=0)), delta)
    denom = sx * sy + delta
    loss = float(-np.mean(cov / denom))
    dsx = np.where(sx_raw > delta, xc / (n * sx), 0.0)
    grad = -(yc / (n * denom)) + (cov * sy / denom ** 2) * dsx
    return loss, grad / K


def beta_from_weights(w: np.ndarray) -> np.ndarray:
    """Mixture logits from win-probability weights; negatives floor before normalizing."""
    floored = np.maximum(np.asarray(w, dtype=float), BETA_WEIGHT_FLOOR)
    return np.log(floored / floored.sum())


# ---------------------------------------------------------------------------
# losses

@dataclass
class Batch:
    obs: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    returns: np.ndarray
    factor_returns: np.ndarray
    a_scalar: np.ndarray
    a_factor: np.ndarray
    eps: np.ndarray


def compute_losses(net: PolicyNetwork, batch: Batch, coeffs: TrainCoeffs, c_h: float,
                   gate_mode: str = 'learned', norm: Tuple[float, float] = (0.0, 1.0)
                   ) -> Tuple[Dict[str, float], Params]:
    """Total objective and analytic gradients for one minibatch.

    The blend is recomputed from the live gate and β on the stored
    advantages, then normalized with the rollout-level statistics `norm`.
    """
    if gate_mode not in GATE_MODES:
        raise ValueError(f"Unknown gate mode '{gate_mode}'")
    n = len(batch.actions)
    out = net.forward(batch.obs, batch.masks, keep_cache=True)
    cache = out['cache']
    log_probs, probs = out['log_probs'], out['probs']
    rows = np.arange(n)

    # blended, normalized advantage
    w = softmax(net.params['beta'])
    factor_mix = batch.a_factor @ w
    if gate_mode == 'learned':
        g = out['gate']
    elif gate_mode == 'fixed':
        g = np.full(n, FIXED_GATE)
    else:
        g = np.zeros(n)
    mu, sd = norm
    adv = ((1.0 - g) * batch.a_scalar + g * factor_mix - mu) / sd

    # clipped surrogate
    logp_a = log_probs[rows, batch.actions]
    ratio = np.exp(logp_a - batch.old_log_probs)
    clipped = np.clip(ratio, 1.0 - coeffs.clip, 1.0 + coeffs.clip)
    surr1, surr2 = ratio * adv, clipped * adv
    use_unclipped = surr1 <= surr2
    l_ppo = float(-np.mean(np.minimum(surr1, surr2)))
    d_ratio = np.where(use_unclipped, -adv / n, 0.0)
    d_adv = -np.where(use_unclipped, ratio, clipped) / n

    # mask-aware entropy
    safe_logp = np.where(cache['mask'], log_probs, 0.0)
    ent_rows = -(probs * safe_logp).sum(axis=1)
    l_ent = float(ent_rows.mean())

    d_logits = np.zeros_like(log_probs)
    d_logp_a = d_ratio * ratio
    d_logits -= d_logp_a[:, None] * probs
    d_logits[rows, batch.actions] += d_logp_a
    d_logits += (c_h / n) * probs * (safe_logp + ent_rows[:, None])

    # scalar and factor critics
    V, Vk = out['value'], out['factor_values']
    l_value = float(np.mean((batch.returns - V) ** 2))
    l_factor = float(np.mean((batch.factor_returns - Vk) ** 2))
    d_heads = np.zeros((n, 1 + N_FACTORS))
    d_heads[:, 0] = coeffs.c_v * 2.0 * (V - batch.returns) / n
    d_heads[:, 1:] = coeffs.c_f * 2.0 * (Vk - batch.factor_returns) / (n * N_FACTORS)

    # calibration on the live factor advantages
    l_cal = 0.0
    if n >= 2:
        l_cal, d_live = calibration_loss(batch.factor_returns - Vk, batch.eps, coeffs.delta)
        d_heads[:, 1:] -= coeffs.c_c * d_live

    # gate: surrogate path plus Bernoulli entropy
    gate_out = out['gate']
    g_clip = np.clip(gate_out, 1e-12, 1.0 - 1e-12)
    l_gate = float(np.mean(-g_clip * np.log(g_clip) - (1.0 - g_clip) * np.log(1.0 - g_clip)))
    d_gate_logit = np.zeros(n)
    if gate_mode == 'learned':
        d_g = d_adv * (factor_mix - batch.a_scalar) / sd
        d_g -= (coeffs.c_e / n) * np.log((1.0 - g_clip) / g_clip)
        d_gate_logit = d_g * gate_out * (1.0 - gate_out)

    grads = net.backward(cache, d_logits, d_heads, d_gate_logit)

    d_w = (d_adv * g / sd) @ batch.a_factor
    grads['beta'] = w * (d_w - float(w @ d_w))

    total = (l_ppo + coeffs.c_v * l_value - c_h * l_ent + coeffs.c_f * l_factor
             + coeffs.c_c * l_cal - (coeffs.c_e * l_gate if gate_mode == 'learned' else 0.0))
    losses = {'total': total, 'policy': l_ppo, 'value': l_value, 'entropy': l_ent,
              'factor': l_factor, 'calibration': l_cal, 'gate_entropy': l_gate,
              'approx_kl': float(np.mean(batch.old_log_probs - logp_a)),
              'clip_fraction': float(np.mean(np.abs(ratio - 1.0) > coeffs.clip))}
    return losses, grads


# ---------------------------------------------------------------------------
# calibration metrics

def calibration_metrics(a_factor: np.ndarray, eps: np.ndarray, beta: np.ndarray,
                        gates: np.ndarray) -> Dict[str, Any]:
    """Per-factor correlation, sign agreement and credit share plus gate statistics."""
    w = softmax(np.asarray(beta, dtype=float))
    share = credit_share(a_factor, w)
    return {
        'correlation': {f: pearson(a_factor[:, k], eps[:, k]) for k, f in enumerate(FACTORS)},
        'sign_agreement': {f: sign_agreement(a_factor[:, k], eps[:, k]) for k, f in enumerate(FACTORS)},
        'credit_share': dict(zip(FACTORS, share.tolist())),
        'mixture_weights': dict(zip(FACTORS, w.tolist())),
        'gate_mean': float(np.mean(gates)), 'gate_min': float(np.min(gates)), 'gate_max': float(np.max(gates)),
    }


# ---------------------------------------------------------------------------
# updates

def _check_finite(losses: Dict[str, float], grads: Params, update_index: int) -> None:
    bad = [k for k, v in losses.items() if not np.isfinite(v)]
    bad += [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        snapshot = {k: round(v, 6) for k, v in losses.items()}
        raise TrainingDivergedError(f'non-finite values at update {update_index}: {sorted(bad)} losses={snapshot}')


def update(buffer: RolloutBuffer, net: PolicyNetwork, opt: Adam, coeffs: TrainCoeffs,
           variant: str = 'cgfa', progress: float = 0.0, seed: int = 0,
           update_index: int = 0) -> Tuple[PolicyNetwork, Dict[str, Any]]:
    """One update over a full buffer: advantages, then epochs of shuffled minibatches."""
    gate_mode, coeffs = resolve_variant(variant, coeffs)
    T = len(buffer)
    if T == 0:
        raise ValueError('Cannot update from an empty rollout buffer')
    lr = linear_schedule(coeffs.lr_start, coeffs.lr_end, progress)
    c_h = linear_schedule(coeffs.c_h_start, coeffs.c_h_end, progress)

    a_scalar = gae(buffer.rewards[:T], buffer.values[:T], buffer.dones[:T], buffer.bootstrap_value,
                   coeffs.gamma, coeffs.lam)
    returns = a_scalar + buffer.values[:T]
    factor_returns, a_factor = factor_returns_advantages(buffer, coeffs.gamma, coeffs.lam)
    if gate_mode == 'learned':
        gates = buffer.gates[:T]
    else:
        gates = np.full(T, FIXED_GATE if gate_mode == 'fixed' else 0.0)
    blended = blend_advantage(a_scalar, a_factor, gates, net.params['beta'])
    _, mu, sd = normalize_advantages(blended)

    rng = np.random.default_rng([seed, update_index])
    history: List[Dict[str, float]] = []
    norms: List[float] = []
    for _ in range(coeffs.epochs):
        order = rng.permutation(T)
        for start in range(0, T, coeffs.minibatch):
            idx = order[start:start + coeffs.minibatch]
            batch = Batch(obs=buffer.obs[idx], masks=buffer.masks[idx], actions=buffer.actions[idx],
                          old_log_probs=buffer.log_probs[idx], returns=returns[idx],
                          factor_returns=factor_returns[idx], a_scalar=a_scalar[idx],
                          a_factor=a_factor[idx], eps=buffer.epsilons[idx])
            losses, grads = compute_losses(net, batch, coeffs, c_h, gate_mode, (mu, sd))
            _check_finite(losses, grads, update_index)
            norms.append(clip_by_global_norm(grads, coeffs.grad_norm_max))
            opt.step(net.params, grads, lr)
            history.append(losses)

    metrics: Dict[str, Any] = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    metrics.update({'update': update_index, 'variant': variant, 'lr': lr, 'entropy_coef': c_h,
                    'grad_norm': float(np.mean(norms)), 'advantage_mean': mu, 'advantage_std': sd})
    metrics.update(calibration_metrics(a_factor, buffer.epsilons[:T], net.params['beta'], gates))
    logger.info('update=%d variant=%s loss=%.4f policy=%.4f value=%.4f entropy=%.4f gate_mean=%.3f',
                update_index, variant, metrics['total'], metrics['policy'], metrics['value'],
                metrics['entropy'], metrics['gate_mean'])
    return net, metrics


def ppo_update(buffer: RolloutBuffer, net: PolicyNetwork, opt: Adam, coeffs: TrainCoeffs,
               progress: float = 0.0, seed: int = 0, update_index: int = 0):
    return update(buffer, net, opt, coeffs, 'ppo', progress, seed, update_index)


def cgfa_update(buffer: RolloutBuffer, net: PolicyNetwork, opt: Adam, coeffs: TrainCoeffs,
                variant: str = 'cgfa', progress: float = 0.0, seed: int = 0, update_index: int = 0):
    return update(buffer, net, opt, coeffs, variant, progress, seed, update_index)
