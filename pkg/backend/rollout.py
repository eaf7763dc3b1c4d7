"""Rollout storage and on-policy collection against an ArenaEnv."""
from typing import Any, Callable, Dict, List, Optional, Tuple
import logging

import numpy as np

from actions import ACTION_DIM
from engine import winner
from observe import OBS_DIM
from scm import N_FACTORS

logger = logging.getLogger(__name__)

# action selector: (net output for the current step, env, rng) -> action index
ActionSelector = Callable[[Dict[str, Any], Any, np.random.Generator], int]


class RolloutBuffer:
    """Fixed-length per-step storage; `dones[t]` marks an episode ending at step t."""

    def __init__(self, n_steps: int, obs_dim: int = OBS_DIM, n_actions: int = ACTION_DIM,
                 n_factors: int = N_FACTORS):
        self.n_steps = n_steps
        self.obs = np.zeros((n_steps, obs_dim))
        self.masks = np.zeros((n_steps, n_actions), dtype=bool)
        self.actions = np.zeros(n_steps, dtype=np.int64)
        self.log_probs = np.zeros(n_steps)
        self.rewards = np.zeros(n_steps)
        self.factor_rewards = np.zeros((n_steps, n_factors))
        self.epsilons = np.zeros((n_steps, n_factors))
        self.values = np.zeros(n_steps)
        self.factor_values = np.zeros((n_steps, n_factors))
        self.gates = np.zeros(n_steps)
        self.dones = np.zeros(n_steps, dtype=bool)
        self.bootstrap_value = 0.0
        self.bootstrap_factor_values = np.zeros(n_factors)
        self.pos = 0

    def __len__(self) -> int:
        return self.pos

    @property
    def full(self) -> bool:
        return self.pos >= self.n_steps

    def add(self, obs: np.ndarray, mask: np.ndarray, action: int, log_prob: float, reward: float,
            factor_reward: np.ndarray, epsilon: np.ndarray, value: float, factor_values: np.ndarray,
            gate: float, done: bool) -> None:
        if self.full:
            raise ValueError(f'Rollout buffer is full ({self.n_steps} steps)')
        factor_reward = np.asarray(factor_reward, dtype=float)
        epsilon = np.asarray(epsilon, dtype=float)
        if factor_reward.shape != (N_FACTORS,) or epsilon.shape != (N_FACTORS,):
            raise ValueError('factor reward and epsilon must have one entry per causal factor')
        t = self.pos
        self.obs[t] = obs
        self.masks[t] = mask
        self.actions[t] = action
        self.log_probs[t] = log_prob
        self.rewards[t] = reward
        self.factor_rewards[t] = factor_reward
        self.epsilons[t] = epsilon
        self.values[t] = value
        self.factor_values[t] = factor_values
        self.gates[t] = gate
        self.dones[t] = done
        self.pos += 1

    def set_bootstrap(self, value: float, factor_values: np.ndarray) -> None:
        self.bootstrap_value = float(value)
        self.bootstrap_factor_values = np.asarray(factor_values, dtype=float)

    def reset(self) -> None:
        self.pos = 0


def sample_action(out: Dict[str, Any], env: Any, rng: np.random.Generator) -> int:
    probs = np.exp(out['log_probs'])
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def collect_rollout(env, net, buffer: RolloutBuffer, rng: np.random.Generator,
                    obs: np.ndarray, info: Dict[str, Any],
                    select: ActionSelector = sample_action,
                    on_step: Optional[Callable[[Dict[str, Any]], None]] = None
                    ) -> Tuple[np.ndarray, Dict[str, Any], List[Dict[str, Any]]]:
    """Fill `buffer` from the current env position; returns (obs, info, finished episodes)."""
    buffer.reset()
    episodes: List[Dict[str, Any]] = []
    ep_return, ep_len = 0.0, 0
    while not buffer.full:
        mask = info['action_mask']
        out = net.forward(obs, mask)
        step_out = {
            'log_probs': out['log_probs'][0],
            'value': float(out['value'][0]),
            'factor_values': out['factor_values'][0],
            'gate': float(out['gate'][0]),
        }
        action = select(step_out, env, rng)
        next_obs, reward, terminated, truncated, next_info = env.step(action)
        done = bool(terminated or truncated)
        buffer.add(obs, mask, action, step_out['log_probs'][action], reward, next_info['factor_reward'],
                   next_info['epsilon'], step_out['value'], step_out['factor_values'], step_out['gate'], done)
        if on_step is not None:
            on_step({'causal_vars': next_info['causal_vars_prev'], 'causal_vars_next': next_info['causal_vars'],
                     'action': action, 'outcome': next_info['outcome'], 'done': done})
        ep_return += reward
        ep_len += 1
        if done:
            won = winner(next_info['outcome']) == env.seat
            episodes.append({'return': ep_return, 'length': ep_len, 'won': won,
                             'outcome': next_info['outcome'], 'opponent': next_info['opponent_deck']})
            ep_return, ep_len = 0.0, 0
            obs, info = env.reset()
        else:
            obs, info = next_obs, next_info
    if buffer.dones[-1]:
        buffer.set_bootstrap(0.0, np.zeros(N_FACTORS))
    else:
        tail = net.forward(obs, info['action_mask'])
        buffer.set_bootstrap(float(tail['value'][0]), tail['factor_values'][0])
    logger.debug('rollout collected steps=%d episodes=%d', buffer.n_steps, len(episodes))
    return obs, info, episodes
