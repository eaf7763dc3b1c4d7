"""Gymnasium wrapper seating a learner against an embedded opponent policy.

Each step publishes the factor vectors before and after, the per-factor
reward, the SCM-predicted intervention effect of the chosen action and the
action mask for the next decision.
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from actions import ACTION_DIM, compute_mask
from agents import make_policy
from cards import ARCHETYPES, deck_for
from engine import (DEFAULT_TURN_CAP, GameState, StepEvents, episode_seed, new_game, step, winner)
from observe import OBS_DIM, encode
from rewards import DEFAULT_DENSE_WEIGHTS, SCHEMES, ShapingCoeffs, factor_rewards, scheme_reward
from scm import WinProbLearner, extract, factor_vector, intervention_effect

logger = logging.getLogger(__name__)

OPPONENT_SCHEDULES = ('fixed', 'pool')


class ArenaEnv(gym.Env):
    """One learner seat (player 0) versus a scripted or random opponent."""

    metadata = {'render_modes': []}

    def __init__(self, deck: str, opponent_decks: Sequence[str], opponent: str = 'heuristic',
                 scheme: str = 'shaped', coeffs: Optional[ShapingCoeffs] = None,
                 dense_weights: Sequence[float] = DEFAULT_DENSE_WEIGHTS, turn_cap: int = DEFAULT_TURN_CAP,
                 seed: int = 0, schedule: str = 'pool', alternate_first: bool = True,
                 win_learner: Optional[WinProbLearner] = None):
        super().__init__()
        if deck not in ARCHETYPES:
            raise ValueError(f"Unknown archetype '{deck}'")
        if not opponent_decks:
            raise ValueError('At least one opponent deck is required')
        if scheme not in SCHEMES:
            raise ValueError(f"Unknown reward scheme '{scheme}'")
        if schedule not in OPPONENT_SCHEDULES:
            raise ValueError(f"Unknown opponent schedule '{schedule}'")
        self.deck = deck
        self.opponent_decks = list(opponent_decks)
        self.opponent = opponent
        self.scheme = scheme
        self.coeffs = coeffs or ShapingCoeffs()
        self.dense_weights = tuple(dense_weights)
        self.turn_cap = turn_cap
        self.base_seed = int(seed)
        self.schedule = schedule
        self.alternate_first = alternate_first
        self.win_learner = win_learner or WinProbLearner()
        self.seat = 0

        self.observation_space = spaces.Box(low=0.0, high=1.0, shape=(OBS_DIM,), dtype=np.float64)
        self.action_space = spaces.Discrete(ACTION_DIM)

        self.episode = 0
        self.state: Optional[GameState] = None
        self.opponent_deck: Optional[str] = None
        self._opp_rng = np.random.default_rng(self.base_seed)
        self._schedule_rng = np.random.default_rng([self.base_seed, 1])

    # ------------------------------------------------------------------
    def _info(self) -> Dict[str, Any]:
        return {
            'action_mask': self.action_masks(),
            'phi': factor_vector(extract(self.state, self.seat, self.win_learner.weights)),
            'opponent_deck': self.opponent_deck,
            'turn': self.state.turn,
        }

    def action_masks(self) -> np.ndarray:
        if self.state is None or self.state.outcome is not None:
            return np.zeros(ACTION_DIM, dtype=bool)
        return compute_mask(self.state)

    def _play_opponent(self, events: StepEvents) -> None:
        while self.state.outcome is None and self.state.decision_player != self.seat:
            action = self._opp_policy(self.state, self._opp_rng)
            self.state, ev, _ = step(self.state, action, inplace=True)
            events.add(ev)

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        super().reset(seed=seed)
        options = options or {}
        if seed is not None:
            self.base_seed = int(seed)
            self.episode = 0
            self._opp_rng = np.random.default_rng(self.base_seed)
            self._schedule_rng = np.random.default_rng([self.base_seed, 1])

        if 'opponent_deck' in options:
            self.opponent_deck = options['opponent_deck']
        elif self.schedule == 'fixed':
            self.opponent_deck = self.opponent_decks[0]
        else:
            self.opponent_deck = self.opponent_decks[int(self._schedule_rng.integers(len(self.opponent_decks)))]
        selector = self.opponent if self.opponent == 'random' else f'heuristic:{self.opponent_deck}'
        self._opp_policy = make_policy(selector)

        game_seed = options.get('game_seed', episode_seed(self.base_seed, self.episode))
        first = options.get('first_player', self.episode % 2 if self.alternate_first else 0)
        self.state = new_game(deck_for(self.deck), deck_for(self.opponent_deck), game_seed,
                              self.turn_cap, first_player=first)
        self.episode += 1
        self._play_opponent(StepEvents())
        return encode(self.state, self.seat), self._info()

    def step(self, action: int):
        if self.state is None or self.state.outcome is not None:
            raise RuntimeError('Call reset() before step() on a finished episode')
        weights = self.win_learner.weights
        vars_t = extract(self.state, self.seat, weights)
        epsilon = intervention_effect(self.state, int(action), weights)

        events = StepEvents()
        self.state, ev, _ = step(self.state, int(action), inplace=True)
        events.add(ev)
        self._play_opponent(events)

        outcome = self.state.outcome
        vars_t1 = extract(self.state, self.seat, weights)
        phi_t, phi_t1 = factor_vector(vars_t), factor_vector(vars_t1)
        reward = scheme_reward(self.scheme, vars_t, vars_t1, events, outcome, self.seat,
                               self.coeffs, self.dense_weights)
        terminated = outcome is not None
        if terminated:
            self.win_learner.record(phi_t1, winner(outcome) == self.seat)
            logger.debug('episode done episode=%d outcome=%s opponent=%s turn=%d',
                         self.episode, outcome, self.opponent_deck, self.state.turn)

        info = self._info()
        info.update({
            'phi_prev': phi_t,
            'factor_reward': factor_rewards(phi_t, phi_t1),
            'epsilon': epsilon,
            'outcome': outcome,
            'events': events.to_dict(),
            'causal_vars': vars_t1.to_dict(),
            'causal_vars_prev': vars_t.to_dict(),
        })
        return encode(self.state, self.seat), float(reward), terminated, False, info
