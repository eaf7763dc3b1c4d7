"""Shared pytest fixtures; puts backend/ on the import path."""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from actions import compute_mask  # noqa: E402
from cards import deck_for  # noqa: E402
from engine import new_game, step  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running training or evaluation tests')


def random_playout(state, seed=0, max_steps=20000):
    """Play uniformly random legal actions until the game ends; returns (state, actions)."""
    rng = np.random.default_rng(seed)
    actions = []
    while state.outcome is None and len(actions) < max_steps:
        legal = np.flatnonzero(compute_mask(state))
        action = int(rng.choice(legal))
        state, _, _ = step(state, action, inplace=True)
        actions.append(action)
    return state, actions


def iter_random_states(n, seed=0):
    """Yield `n` live states from uniformly random games cycling over every deck pairing."""
    from cards import ARCHETYPES

    rng = np.random.default_rng(seed)
    pairs = [(a, b) for a in ARCHETYPES for b in ARCHETYPES]
    produced, game = 0, 0
    while produced < n:
        deck_a, deck_b = pairs[game % len(pairs)]
        state = new_game(deck_for(deck_a), deck_for(deck_b), seed=seed * 100_000 + game)
        while state.outcome is None and produced < n:
            legal = np.flatnonzero(compute_mask(state))
            assert legal.size > 0, f'no legal action at turn {state.turn} phase {state.phase}'
            yield state
            produced += 1
            state, _, _ = step(state, int(rng.choice(legal)))
        game += 1


@pytest.fixture
def red_vs_control():
    return new_game(deck_for('mono_red_aggro'), deck_for('azorius_control'), seed=7)


@pytest.fixture
def playout():
    return random_playout


@pytest.fixture
def random_states():
    return iter_random_states


@pytest.fixture(scope='session')
def tiny_config():
    from config import ArenaConfig, apply_overrides

    return apply_overrides(ArenaConfig(), [
        'engine.turn_cap=8', 'network.hidden=[8, 8]', 'network.gate_hidden=4',
        'train.total_steps=64', 'train.n_steps=32', 'train.epochs=1', 'train.minibatch=32',
        'cwm.hidden=16', 'cwm.embed_dim=4', 'cwm.steps_per_rollout=2', 'cwm.batch_size=16',
        'harness.seeds=[0]', 'harness.episodes=2', 'harness.resamples=200',
        'harness.decks=["mono_red_aggro"]',
    ])


@pytest.fixture(scope='session')
def tiny_checkpoints(tiny_config, tmp_path_factory):
    """cgfa and causal checkpoints for mono_red_aggro trained for two updates."""
    from cards import ARCHETYPES
    from model_training import train_agent

    models_dir = str(tmp_path_factory.mktemp('models'))
    return {kind: train_agent(kind, 'mono_red_aggro', ARCHETYPES, tiny_config, 0, models_dir)
            for kind in ('cgfa', 'causal')}
