"""Causal world model for the CWM-augmented PPO baseline.

The model reads the thirteen causal variables (range-normalized) and a
learned action embedding, and predicts the change in every causal variable
plus the episode win probability. At action time its predicted factor
changes are projected through the current win-probability weights and
blended with the PPO log-probabilities.
"""
from collections import deque
from typing import Any, Deque, Dict, List, Optional, Tuple
import logging

import numpy as np

from actions import ACTION_DIM, compute_mask
from engine import GameState, winner
from networks import Adam, Params, init_mlp, mlp_backward, mlp_forward, sigmoid
from scm import FACTORS, RANGES, VARIABLES, WinWeights, extract

logger = logging.getLogger(__name__)

EMBED_DIM = 32
HIDDEN = 128
LEARNING_RATE = 1e-3
REPLAY_SIZE = 20000
STEPS_PER_ROLLOUT = 16
BATCH_SIZE = 128
WIN_LOSS_WEIGHT = 0.5
CAUSAL_WEIGHT = 0.6
EXPLORE_START = 0.10
EXPLORE_END = 0.01

_LO = np.array([RANGES[v][0] for v in VARIABLES], dtype=float)
_SPAN = np.array([RANGES[v][1] - RANGES[v][0] for v in VARIABLES], dtype=float)
_FACTOR_IDX = np.array([VARIABLES.index(f) for f in FACTORS])


def normalize_vars(values: Dict[str, float]) -> np.ndarray:
    raw = np.array([values[v] for v in VARIABLES], dtype=float)
    return (raw - _LO) / _SPAN


class CausalWorldModel:
    def __init__(self, n_actions: int = ACTION_DIM, embed_dim: int = EMBED_DIM, hidden: int = HIDDEN,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_actions = n_actions
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.seed = seed
        n_vars = len(VARIABLES)
        self.params: Params = {'embed': rng.normal(0.0, 0.1, size=(n_actions, embed_dim))}
        init_mlp(self.params, 'trunk', [n_vars + embed_dim, hidden], rng)
        init_mlp(self.params, 'delta', [hidden, n_vars], rng)
        init_mlp(self.params, 'win', [hidden, 1], rng, zero_final=True)

    def forward(self, cv: np.ndarray, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Dict[str, Any]]:
        """(normalized ΔCV prediction, win logit, cache)."""
        cv = np.atleast_2d(np.asarray(cv, dtype=float))
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        x = np.concatenate([cv, self.params['embed'][actions]], axis=1)
        h, trunk_cache = mlp_forward(self.params, 'trunk', x, activate_output=True)
        delta, delta_cache = mlp_forward(self.params, 'delta', h)
        win_logit, win_cache = mlp_forward(self.params, 'win', h)
        cache = {'trunk': trunk_cache, 'delta': delta_cache, 'win': win_cache, 'actions': actions}
        return delta, win_logit[:, 0], cache

    def loss_and_grads(self, cv: np.ndarray, actions: np.ndarray, cv_next: np.ndarray,
                       won: np.ndarray) -> Tuple[Dict[str, float], Params]:
        """Mean squared ΔCV error plus the weighted win cross-entropy."""
        delta, logit, cache = self.forward(cv, actions)
        target = np.asarray(cv_next, dtype=float) - np.asarray(cv, dtype=float)
        won = np.asarray(won, dtype=float)
        n, n_vars = delta.shape
        mse = float(np.mean((delta - target) ** 2))
        d_delta = 2.0 * (delta - target) / (n * n_vars)

        # class-balanced weights
        n_pos = won.sum()
        n_neg = n - n_pos
        weights = np.where(won > 0.5, n / (2.0 * n_pos) if n_pos else 0.0, n / (2.0 * n_neg) if n_neg else 0.0)
        p = sigmoid(logit)
        eps = 1e-12
        bce_rows = -(won * np.log(p + eps) + (1.0 - won) * np.log(1.0 - p + eps))
        bce = float((weights * bce_rows).sum() / weights.sum())
        d_logit = WIN_LOSS_WEIGHT * weights * (p - won) / weights.sum()

        grads: Params = {}
        d_h = mlp_backward(self.params, 'delta', cache['delta'], d_delta, grads)
        d_h = d_h + mlp_backward(self.params, 'win', cache['win'], d_logit[:, None], grads)
        d_x = mlp_backward(self.params, 'trunk', cache['trunk'], d_h, grads, activate_output=True)
        d_embed = np.zeros_like(self.params['embed'])
        np.add.at(d_embed, cache['actions'], d_x[:, len(VARIABLES):])
        grads['embed'] = d_embed
        return {'total': mse + WIN_LOSS_WEIGHT * bce, 'delta_mse': mse, 'win_bce': bce}, grads

    def predict_delta(self, cv: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Predicted ΔCV in raw variable units, one row per action."""
        actions = np.atleast_1d(actions)
        cv = np.repeat(np.atleast_2d(cv), len(actions), axis=0)
        delta, _, _ = self.forward(cv, actions)
        return delta * _SPAN

    def win_probability(self, cv: np.ndarray, actions: np.ndarray) -> np.ndarray:
        _, logit, _ = self.forward(cv, actions)
        return sigmoid(logit)

    def state_dict(self) -> Dict[str, Any]:
        return {'config': {'n_actions': self.n_actions, 'embed_dim': self.embed_dim,
                           'hidden': self.hidden, 'seed': self.seed},
                'params': {k: v.copy() for k, v in self.params.items()}}

    @classmethod
    def from_state_dict(cls, state: Dict[str, Any]) -> 'CausalWorldModel':
        model = cls(**state['config'])
        model.params = {k: np.array(v, dtype=float) for k, v in state['params'].items()}
        return model


class ReplayBuffer:
    """Transitions of (normalized CV, action, next normalized CV, won).

    Steps are held per episode until the outcome is known.
    """

    def __init__(self, capacity: int = REPLAY_SIZE, seat: int = 0):
        self.capacity = capacity
        self.seat = seat
        self._items: Deque[Tuple[np.ndarray, int, np.ndarray, float]] = deque(maxlen=capacity)
        self._pending: List[Tuple[np.ndarray, int, np.ndarray]] = []

    def __len__(self) -> int:
        return len(self._items)

    def add_step(self, record: Dict[str, Any]) -> None:
        self._pending.append((normalize_vars(record['causal_vars']), int(record['action']),
                              normalize_vars(record['causal_vars_next'])))
        if record['done']:
            won = float(winner(record['outcome']) == self.seat)
            for cv, action, cv_next in self._pending:
                self._items.append((cv, action, cv_next, won))
            self._pending = []

    def add(self, cv: np.ndarray, action: int, cv_next: np.ndarray, won: bool) -> None:
        self._items.append((np.asarray(cv, dtype=float), int(action), np.asarray(cv_next, dtype=float), float(won)))

    def sample(self, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        idx = rng.integers(len(self._items), size=n)
        rows = [self._items[i] for i in idx]
        return (np.stack([r[0] for r in rows]), np.array([r[1] for r in rows]),
                np.stack([r[2] for r in rows]), np.array([r[3] for r in rows]))


def cwm_update(replay: ReplayBuffer, model: CausalWorldModel, opt: Adam, rng: np.random.Generator,
               steps: int = STEPS_PER_ROLLOUT, batch_size: int = BATCH_SIZE) -> Dict[str, float]:
    if len(replay) == 0:
        return {}
    history = []
    for _ in range(steps):
        cv, actions, cv_next, won = replay.sample(min(batch_size, len(replay)), rng)
        losses, grads = model.loss_and_grads(cv, actions, cv_next, won)
        opt.step(model.params, grads)
        history.append(losses)
    metrics = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    logger.debug('cwm update replay=%d delta_mse=%.5f win_bce=%.4f', len(replay),
                 metrics['delta_mse'], metrics['win_bce'])
    return metrics


def projected_scores(model: CausalWorldModel, cv: np.ndarray, actions: np.ndarray,
                     weights: WinWeights) -> np.ndarray:
    """score(a) = Σ_k (w_k / std_k)·ΔCV_pred(a)_k over the causal factors."""
    delta = model.predict_delta(cv, actions)[:, _FACTOR_IDX]
    return delta @ (weights.w / np.maximum(weights.stds, 1e-8))


def blend_choice(log_probs: np.ndarray, scores: np.ndarray, legal: np.ndarray, lam: float) -> int:
    """argmax over legal a of logπ(a) + λ·score(a); ties go to the lowest index."""
    total = np.asarray(log_probs, dtype=float)[legal] + lam * np.asarray(scores, dtype=float)
    return int(legal[int(np.argmax(total))])


def cwm_act(state: GameState, log_probs: np.ndarray, model: CausalWorldModel, weights: WinWeights,
            lam: float = CAUSAL_WEIGHT, explore: float = EXPLORE_START,
            rng: Optional[np.random.Generator] = None) -> int:
    rng = rng or np.random.default_rng()
    legal = np.flatnonzero(compute_mask(state))
    if len(legal) == 0:
        raise ValueError('Action mask has no legal actions')
    if explore > 0 and rng.random() < explore:
        return int(rng.choice(legal))
    if lam == 0.0:
        return blend_choice(log_probs, np.zeros(len(legal)), legal, 0.0)
    cv = normalize_vars(extract(state, state.decision_player, weights).to_dict())
    return blend_choice(log_probs, projected_scores(model, cv, legal, weights), legal, lam)
