"""Agent training: rollouts against the opponent pool, PPO/CGFA updates and joblib checkpoints."""
from typing import Any, Callable, Dict, List, Optional, Sequence
import logging
import math
import os

import joblib
import numpy as np
import pandas as pd

from actions import ACTION_DIM
from cards import ARCHETYPES
from config import ArenaConfig
from cwm import CausalWorldModel, ReplayBuffer, cwm_act, cwm_update
from environment import ArenaEnv
from networks import Adam, PolicyNetwork
from observe import LAYOUT_VERSION, OBS_DIM
from ppo import VARIANTS, beta_from_weights, linear_schedule, update
from rollout import RolloutBuffer, collect_rollout, sample_action
from scm import WinWeights

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def checkpoint_name(kind: str, deck: str, seed: int, holdout: Optional[str] = None) -> str:
    suffix = f'_holdout-{holdout}' if holdout else ''
    return f'{kind}_{deck}_seed{seed}{suffix}.pkl'


def layout_signature() -> Dict[str, int]:
    return {'obs_dim': OBS_DIM, 'action_dim': ACTION_DIM, 'layout_version': LAYOUT_VERSION}


def _causal_selector(model: CausalWorldModel, cfg: ArenaConfig, progress: float) -> Callable:
    explore = linear_schedule(cfg.cwm.explore_start, cfg.cwm.explore_end, progress)

    def select(out: Dict[str, Any], env: ArenaEnv, rng: np.random.Generator) -> int:
        return cwm_act(env.state, out['log_probs'], model, env.win_learner.weights,
                       cfg.cwm.causal_weight, explore, rng)
    return select


def train_agent(kind: str, deck: str, opponents: Sequence[str], cfg: ArenaConfig, seed: int,
                models_dir: Optional[str] = None, holdout: Optional[str] = None,
                total_steps: Optional[int] = None) -> Dict[str, Any]:
    """Train one agent and (optionally) checkpoint it; returns the checkpoint dict."""
    if kind not in VARIANTS:
        raise ValueError(f"Unknown agent kind '{kind}'. Expected one of {list(VARIANTS)}")
    if deck not in ARCHETYPES:
        raise ValueError(f"Unknown archetype '{deck}'")
    opponents = list(opponents)
    total_steps = total_steps or cfg.train.total_steps
    coeffs = cfg.train.coeffs()

    env = ArenaEnv(deck, opponents, opponent='heuristic', scheme=cfg.reward.scheme,
                   coeffs=cfg.reward.shaping(), dense_weights=cfg.reward.dense_weights,
                   turn_cap=cfg.engine.turn_cap, seed=seed, schedule=cfg.harness.schedule)
    net = PolicyNetwork(hidden=cfg.network.hidden, gate_hidden=cfg.network.gate_hidden, seed=seed)
    net.params['beta'] = beta_from_weights(env.win_learner.weights.w)
    opt = Adam(lr=cfg.train.lr_start)

    model = replay = cwm_opt = None
    if kind == 'causal':
        model = CausalWorldModel(embed_dim=cfg.cwm.embed_dim, hidden=cfg.cwm.hidden, seed=seed)
        replay = ReplayBuffer(cfg.cwm.replay_size, seat=env.seat)
        cwm_opt = Adam(lr=cfg.cwm.lr)

    rng = np.random.default_rng([seed, 7])
    buffer = RolloutBuffer(cfg.train.n_steps)
    obs, info = env.reset(seed=seed)
    n_updates = max(1, math.ceil(total_steps / cfg.train.n_steps))
    rows: List[Dict[str, Any]] = []
    logger.info('training start kind=%s deck=%s opponents=%s seed=%d updates=%d',
                kind, deck, ','.join(opponents), seed, n_updates)

    for u in range(n_updates):
        progress = u / n_updates
        select = _causal_selector(model, cfg, progress) if model is not None else sample_action
        on_step = replay.add_step if replay is not None else None
        obs, info, episodes = collect_rollout(env, net, buffer, rng, obs, info, select, on_step)
        net, metrics = update(buffer, net, opt, coeffs, kind, progress, seed, u)
        if model is not None:
            cwm_metrics = cwm_update(replay, model, cwm_opt, rng, cfg.cwm.steps_per_rollout, cfg.cwm.batch_size)
            metrics.update({f'cwm_{k}': v for k, v in cwm_metrics.items()})
        metrics.update({
            'steps': (u + 1) * cfg.train.n_steps,
            'episodes': len(episodes),
            'train_win_rate': float(np.mean([e['won'] for e in episodes])) if episodes else float('nan'),
        })
        rows.append(metrics)

    checkpoint = {
        'version': CHECKPOINT_VERSION,
        'kind': kind, 'deck': deck, 'opponents': opponents, 'seed': seed, 'holdout': holdout,
        'layout': layout_signature(),
        'config': cfg.dict(),
        'network': net.state_dict(),
        'optimizer': opt.state_dict(),
        'win_weights': env.win_learner.weights.to_dict(),
        'cwm': model.state_dict() if model is not None else None,
        'rng_state': rng.bit_generator.state,
        'metrics': rows,
    }
    if models_dir:
        os.makedirs(models_dir, exist_ok=True)
        path = os.path.join(models_dir, checkpoint_name(kind, deck, seed, holdout))
        joblib.dump(checkpoint, path)
        checkpoint['path'] = path
        logger.info('checkpoint saved path=%s', path)
    return checkpoint


def load_checkpoint(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f'Checkpoint not found: {path}')
    checkpoint = joblib.load(path)
    if checkpoint.get('layout') != layout_signature():
        raise ValueError(f'Checkpoint {path} was trained for layout {checkpoint.get("layout")}, '
                         f'expected {layout_signature()}')
    return checkpoint


def restore(checkpoint: Dict[str, Any]) -> Dict[str, Any]:
    """Rebuild the network, CWM and win-probability weights stored in a checkpoint."""
    return {
        'kind': checkpoint['kind'],
        'net': PolicyNetwork.from_state_dict(checkpoint['network']),
        'cwm': CausalWorldModel.from_state_dict(checkpoint['cwm']) if checkpoint.get('cwm') else None,
        'win_weights': WinWeights.from_dict(checkpoint['win_weights']),
        'causal_weight': checkpoint['config']['cwm']['causal_weight'],
    }


def metrics_frame(checkpoint: Dict[str, Any]) -> pd.DataFrame:
    """Flatten the per-update metric rows (nested factor dicts become prefixed columns)."""
    return pd.json_normalize(checkpoint['metrics'], sep='.')


if __name__ == '__main__':
    import argparse

    from config import load_config

    parser = argparse.ArgumentParser(description='Train one agent for a deck')
    parser.add_argument('--agent', default='cgfa', choices=list(VARIANTS))
    parser.add_argument('--deck', default='mono_red_aggro', choices=list(ARCHETYPES))
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--steps', type=int, default=None)
    parser.add_argument('--models-dir', type=str, default='models')
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(name)s %(message)s')
    result = train_agent(args.agent, args.deck, list(ARCHETYPES), load_config(), args.seed,
                         args.models_dir, total_steps=args.steps)
    print(metrics_frame(result).tail().to_string())
