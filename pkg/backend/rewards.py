"""Reward schemes: sparse terminal, potential-based shaped, dense event-based,
plus the per-factor reward channel."""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from engine import StepEvents, winner
from scm import CausalVars

SCHEMES = ('sparse', 'shaped', 'dense')

# Φ = α·(mana_t, card_adv, board_press, tempo, life_buffer)
POTENTIAL_VARS = ('mana_t', 'card_adv', 'board_press', 'tempo', 'life_buffer')
DEFAULT_ALPHA = (0.02, 0.05, 0.05, 0.1, 0.05)
DEFAULT_GAMMA = 0.995
DEFAULT_DENSE_WEIGHTS = (0.1, 0.05, 0.05)  # damage, draw, creature

WIN_REWARD = 1.0
LOSS_REWARD = -1.0
DRAW_REWARD = 0.0


@dataclass(frozen=True)
class ShapingCoeffs:
    alpha: Tuple[float, ...] = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if len(self.alpha) != len(POTENTIAL_VARS):
            raise ValueError(f'alpha needs {len(POTENTIAL_VARS)} coefficients, got {len(self.alpha)}')
        if not np.all(np.isfinite(self.alpha)):
            raise ValueError('alpha must be finite')
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f'gamma must lie in (0, 1], got {self.gamma}')


def potential(vars: CausalVars, coeffs: ShapingCoeffs) -> float:
    return float(sum(a * vars[name] for a, name in zip(coeffs.alpha, POTENTIAL_VARS)))


def shaped_reward(vars_t: CausalVars, vars_t1: CausalVars, terminal: float, coeffs: ShapingCoeffs) -> float:
    """γΦ(s') − Φ(s) + terminal reward."""
    return coeffs.gamma * potential(vars_t1, coeffs) - potential(vars_t, coeffs) + terminal


def sparse_reward(outcome: Optional[str], perspective: int) -> float:
    if outcome is None:
        return 0.0
    won = winner(outcome)
    if won is None:
        return DRAW_REWARD
    return WIN_REWARD if won == perspective else LOSS_REWARD


def dense_reward(events: StepEvents, perspective: int,
                 weights: Sequence[float] = DEFAULT_DENSE_WEIGHTS) -> float:
    """Linear in damage dealt, cards drawn and creatures entered by `perspective`."""
    events.validate()
    w_damage, w_draw, w_creature = weights
    return (w_damage * events.damage_to_opponent[perspective]
            + w_draw * events.cards_drawn[perspective]
            + w_creature * events.creatures_entered[perspective])


def factor_rewards(phi_t: np.ndarray, phi_t1: np.ndarray) -> np.ndarray:
    return np.asarray(phi_t1, dtype=float) - np.asarray(phi_t, dtype=float)


def scheme_reward(scheme: str, vars_t: CausalVars, vars_t1: CausalVars, events: StepEvents,
                  outcome: Optional[str], perspective: int, coeffs: ShapingCoeffs,
                  dense_weights: Sequence[float] = DEFAULT_DENSE_WEIGHTS) -> float:
    """Scalar reward under a scheme; dense adds its event term on top of shaping."""
    if scheme not in SCHEMES:
        raise ValueError(f"Unknown reward scheme '{scheme}'. Expected one of {list(SCHEMES)}")
    terminal = sparse_reward(outcome, perspective)
    if scheme == 'sparse':
        return terminal
    reward = shaped_reward(vars_t, vars_t1, terminal, coeffs)
    if scheme == 'dense':
        reward += dense_reward(events, perspective, dense_weights)
    return reward
