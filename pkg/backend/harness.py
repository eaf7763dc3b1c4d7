"""Evaluation harness: paired-seed matches, the headline, transfer and ablation
protocols, and the single-episode case study.

Learned agents act greedily (argmax over legal-action probabilities, lowest
index on ties). Agent A always sits in seat 0 and the first player
alternates with the episode index.
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import hashlib
import logging
import os
import re

import numpy as np
import pandas as pd

from actions import compute_mask
from agents import make_policy
from cards import ARCHETYPES, deck_for
from config import ArenaConfig
from cwm import cwm_act
from engine import GameState, episode_seed, new_game, state_hash, step, trace_record, winner
from environment import ArenaEnv
from model_training import checkpoint_name, load_checkpoint, restore, train_agent
from observe import encode
from ppo import VARIANTS, gae
from scm import FACTORS, N_FACTORS
from stat_tests import (holm_bonferroni, paired_bootstrap_test, percentile_bootstrap_ci,
                        transfer_gap, wilson_interval)

logger = logging.getLogger(__name__)

Policy = Callable[[GameState, np.random.Generator], int]
AgentRef = Union[str, Mapping[int, str]]

ANCHORS = ('random', 'heuristic')
N_FOLDS = len(ARCHETYPES)
_CHECKPOINT_RE = re.compile(
    r'^(?P<kind>{k})_(?P<deck>{d})_seed(?P<seed>\d+)(?:_holdout-(?P<holdout>{d}))?\.pkl$'.format(
        k='|'.join(sorted(VARIANTS, key=len, reverse=True)), d='|'.join(ARCHETYPES)))


@dataclass
class MatchSpec:
    agent_a: AgentRef
    agent_b: AgentRef
    deck_a: str
    deck_b: str
    episodes: int
    seeds: List[int]
    turn_cap: int = 30
    record_traces: bool = False

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError('episodes must be at least 1')
        if not self.seeds:
            raise ValueError('at least one seed is required')
        for deck in (self.deck_a, self.deck_b):
            if deck not in ARCHETYPES:
                raise ValueError(f"Unknown archetype '{deck}'")

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key in ('agent_a', 'agent_b'):
            if isinstance(out[key], Mapping):
                out[key] = {str(k): v for k, v in out[key].items()}
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MatchSpec':
        data = dict(data)
        for key in ('agent_a', 'agent_b'):
            if isinstance(data[key], Mapping):
                data[key] = {int(k): v for k, v in data[key].items()}
        return cls(**data)


@dataclass
class StatReport:
    kind: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    families: Dict[str, List[str]] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.tables or all(t.empty for t in self.tables.values())


# ---------------------------------------------------------------------------
# agents

def learned_policy(checkpoint: Dict[str, Any]) -> Policy:
    agent = restore(checkpoint)
    net, model = agent['net'], agent['cwm']

    def act(state: GameState, rng: np.random.Generator) -> int:
        mask = compute_mask(state)
        out = net.forward(encode(state, state.decision_player), mask)
        log_probs = out['log_probs'][0]
        if model is not None:
            return cwm_act(state, log_probs, model, agent['win_weights'], agent['causal_weight'], 0.0, rng)
        return int(np.argmax(np.where(mask, log_probs, -np.inf)))
    return act


def resolve_agent(ref: AgentRef, deck: str, seed: int) -> Policy:
    """'random', 'heuristic', a checkpoint path, or a seed → checkpoint mapping."""
    if isinstance(ref, Mapping):
        if seed not in ref:
            raise ValueError(f'no checkpoint for seed {seed}')
        ref = ref[seed]
    if ref == 'random':
        return make_policy('random')
    if ref == 'heuristic':
        return make_policy(f'heuristic:{deck}')
    return learned_policy(load_checkpoint(ref))


def _episode_hash(actions: List[int], final: GameState) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(actions, dtype=np.int64).tobytes())
    h.update(state_hash(final).encode('ascii'))
    return h.hexdigest()


def play_episode(policy_a: Policy, policy_b: Policy, deck_a: str, deck_b: str, seed: int, episode: int,
                 turn_cap: int = 30, record_trace: bool = False) -> Dict[str, Any]:
    state = new_game(deck_for(deck_a), deck_for(deck_b), episode_seed(seed, episode), turn_cap,
                     first_player=episode % 2)
    policies = (policy_a, policy_b)
    rngs = (np.random.default_rng([seed, episode, 0]), np.random.default_rng([seed, episode, 1]))
    actions: List[int] = []
    trace: List[Dict[str, Any]] = []
    while state.outcome is None:
        seat = state.decision_player
        action = policies[seat](state, rngs[seat])
        before = state.clone() if record_trace else None
        state, events, _ = step(state, action, inplace=not record_trace)
        actions.append(int(action))
        if record_trace:
            trace.append(trace_record(before, action, events, state))
    won = winner(state.outcome)
    row = {
        'seed': seed, 'episode': episode, 'first_player': episode % 2, 'outcome': state.outcome,
        'winner': {0: 'a', 1: 'b'}.get(won, 'draw'), 'turns': state.turn, 'decisions': len(actions),
        'trace_hash': _episode_hash(actions, state),
    }
    if record_trace:
        row['trace'] = trace
    return row


def run_match(spec: MatchSpec) -> List[Dict[str, Any]]:
    """Per-episode rows for every seed in `spec`; deterministic given the match spec."""
    rows: List[Dict[str, Any]] = []
    for seed in spec.seeds:
        policy_a = resolve_agent(spec.agent_a, spec.deck_a, seed)
        policy_b = resolve_agent(spec.agent_b, spec.deck_b, seed)
        for ep in range(spec.episodes):
            row = play_episode(policy_a, policy_b, spec.deck_a, spec.deck_b, seed, ep,
                               spec.turn_cap, spec.record_traces)
            row.update({'deck_a': spec.deck_a, 'deck_b': spec.deck_b})
            rows.append(row)
        logger.info('match cell done seed=%d deck_a=%s deck_b=%s episodes=%d', seed, spec.deck_a,
                    spec.deck_b, spec.episodes)
    return rows


def summarize_match(rows: Sequence[Dict[str, Any]], confidence: float = 0.95) -> Dict[str, Any]:
    """Win/draw/loss counts for agent A with a Wilson interval on wins over all episodes."""
    if not rows:
        raise ValueError('no match rows to summarize')
    n = len(rows)
    wins = sum(r['winner'] == 'a' for r in rows)
    losses = sum(r['winner'] == 'b' for r in rows)
    draws = n - wins - losses
    lo, hi = wilson_interval(wins, n, confidence)
    decisive = wins + losses
    return {'episodes': n, 'wins': wins, 'losses': losses, 'draws': draws,
            'win_rate': wins / n, 'ci_lo': lo, 'ci_hi': hi,
            'decisive_win_rate': wins / decisive if decisive else float('nan')}


# ---------------------------------------------------------------------------
# pooled evaluation

def evaluate_against_pool(agent: AgentRef, deck: str, opponents: Sequence[str], seeds: Sequence[int],
                          episodes: int, turn_cap: int = 30) -> pd.DataFrame:
    """One row per (seed, opponent): win rate of `agent` against that heuristic opponent."""
    records = []
    for opponent in opponents:
        spec = MatchSpec(agent, 'heuristic', deck, opponent, episodes, list(seeds), turn_cap)
        frame = pd.DataFrame(run_match(spec))
        for seed, group in frame.groupby('seed'):
            records.append({'seed': int(seed), 'opponent': opponent, 'episodes': len(group),
                            'wins': int((group['winner'] == 'a').sum()),
                            'draws': int((group['winner'] == 'draw').sum()),
                            'win_rate': float((group['winner'] == 'a').mean())})
    return pd.DataFrame(records)


def _check_paired(a: pd.DataFrame, b: pd.DataFrame, keys: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    a_sorted = a.sort_values(list(keys)).reset_index(drop=True)
    b_sorted = b.sort_values(list(keys)).reset_index(drop=True)
    if not a_sorted[list(keys)].equals(b_sorted[list(keys)]):
        raise ValueError(f'unpaired comparison: rows differ on {list(keys)}')
    return a_sorted['win_rate'].to_numpy(), b_sorted['win_rate'].to_numpy()


def apply_holm(table: pd.DataFrame, p_col: str = 'p_boot', out_col: str = 'p_holm') -> pd.DataFrame:
    table = table.copy()
    mask = table[p_col].notna()
    table[out_col] = np.nan
    if mask.any():
        table.loc[mask, out_col] = holm_bonferroni(table.loc[mask, p_col].to_numpy())
    return table


def _rate_summary(rates: np.ndarray, B: int, seed: int) -> Dict[str, float]:
    if len(rates) >= 2:
        lo, hi = percentile_bootstrap_ci(rates, B=B, seed=seed)
    else:
        lo = hi = float(rates[0])
    return {'win_rate': float(np.mean(rates)), 'ci_lo': lo, 'ci_hi': hi}


def headline_from_rates(rates: pd.DataFrame, baseline: str = 'ppo', treatment: str = 'cgfa',
                        B: int = 10000, seed: int = 0) -> StatReport:
    """Table of per-(deck, agent) rates plus the paired baseline-vs-treatment family.

    `rates` needs columns deck, agent, seed, opponent, win_rate.
    """
    if rates.empty:
        raise ValueError('no evaluation rates')
    cells = []
    for (deck, agent), group in rates.groupby(['deck', 'agent'], sort=False):
        row = {'deck': deck, 'agent': agent, 'n_s': int(group['seed'].nunique())}
        row.update(_rate_summary(group['win_rate'].to_numpy(), B, seed))
        cells.append(row)
    table = pd.DataFrame(cells)
    table['delta'] = np.nan
    table['p_boot'] = np.nan

    agents = set(rates['agent'])
    family: List[str] = []
    if baseline in agents and treatment in agents:
        for deck in rates['deck'].unique():
            a = rates[(rates['deck'] == deck) & (rates['agent'] == treatment)]
            b = rates[(rates['deck'] == deck) & (rates['agent'] == baseline)]
            if a.empty or b.empty:
                continue
            x, y = _check_paired(a, b, ('seed', 'opponent'))
            test = paired_bootstrap_test(x, y, B=B, seed=seed)
            sel = (table['deck'] == deck) & (table['agent'] == treatment)
            table.loc[sel, 'delta'] = 100.0 * test.statistic
            table.loc[sel, 'p_boot'] = test.p_value
            family.append(deck)
    table = apply_holm(table)
    return StatReport('headline', {'headline': table}, {'headline': family},
                      {'baseline': baseline, 'treatment': treatment, 'resamples': B, 'ci_method': 'percentile'})


def run_headline(cfg: ArenaConfig, checkpoints: Mapping[str, Mapping[str, Mapping[int, str]]],
                 anchors: Sequence[str] = ANCHORS, baseline: Optional[str] = 'ppo',
                 treatment: Optional[str] = 'cgfa') -> StatReport:
    """Evaluate each agent × deck against the full heuristic pool; anchors use the same seeds.

    The paired family compares `treatment` against `baseline` by name. Pass
    None for both to report rates without a paired comparison.
    """
    h = cfg.harness
    if (baseline is None) != (treatment is None):
        raise ValueError('baseline and treatment must both be named or both be None')
    for role, name in (('baseline', baseline), ('treatment', treatment)):
        if name is not None and name not in checkpoints:
            raise ValueError(f"{role} agent '{name}' has no checkpoints")
    frames = []
    for agent, per_deck in checkpoints.items():
        for deck in h.decks:
            if deck not in per_deck:
                raise ValueError(f'missing checkpoint cell agent={agent} deck={deck}')
            missing = [s for s in h.seeds if s not in per_deck[deck]]
            if missing:
                raise ValueError(f'missing seeds {missing} for agent={agent} deck={deck}')
            frame = evaluate_against_pool(dict(per_deck[deck]), deck, ARCHETYPES, h.seeds, h.episodes,
                                          cfg.engine.turn_cap)
            frames.append(frame.assign(deck=deck, agent=agent))
    for anchor in anchors:
        for deck in h.decks:
            frame = evaluate_against_pool(anchor, deck, ARCHETYPES, h.seeds, h.episodes, cfg.engine.turn_cap)
            frames.append(frame.assign(deck=deck, agent=anchor))
    rates = pd.concat(frames, ignore_index=True)
    report = headline_from_rates(rates, baseline=baseline or '', treatment=treatment or '', B=h.resamples)
    report.tables['rates'] = rates
    return report


def transfer_from_rates(rates: pd.DataFrame, B: int = 10000, seed: int = 0) -> StatReport:
    """Generalization gap per agent from rows (agent, seed, fold, in_rate, out_rate)."""
    if rates.empty:
        raise ValueError('no transfer rates')
    rows = []
    for agent, group in rates.groupby('agent', sort=False):
        folds = group['fold'].nunique()
        if folds != N_FOLDS:
            raise ValueError(f'agent {agent} has {folds} folds, expected {N_FOLDS}')
        in_rates, out_rates = group['in_rate'].to_numpy(), group['out_rate'].to_numpy()
        test = paired_bootstrap_test(in_rates, out_rates, B=B, seed=seed)
        per_fold = group.groupby('fold')[['in_rate', 'out_rate']].mean()
        rows.append({
            'agent': agent,
            'in_dist': float(in_rates.mean()),
            'held_out': float(out_rates.mean()),
            'delta': transfer_gap(float(in_rates.mean()), float(out_rates.mean())),
            'delta_fold_mean': float(np.mean([transfer_gap(r.in_rate, r.out_rate) for r in per_fold.itertuples()])),
            'n_s': len(group),
            'p_boot': test.p_value,
        })
    table = apply_holm(pd.DataFrame(rows))
    return StatReport('transfer', {'transfer': table}, {'transfer': list(table['agent'])}, {'resamples': B})


def run_transfer(cfg: ArenaConfig, deck: str, checkpoints: Mapping[str, Mapping[str, Mapping[int, str]]]) -> StatReport:
    """Leave-one-out: each fold's checkpoint meets its four training opponents and the held-out one.

    `checkpoints` maps agent → holdout archetype → seed → path.
    """
    h = cfg.harness
    rows = []
    for agent, folds in checkpoints.items():
        if set(folds) != set(ARCHETYPES):
            raise ValueError(f'agent {agent} needs one fold per archetype, got {sorted(folds)}')
        for holdout, per_seed in folds.items():
            train_pool = [a for a in ARCHETYPES if a != holdout]
            inside = evaluate_against_pool(dict(per_seed), deck, train_pool, h.seeds, h.episodes, cfg.engine.turn_cap)
            outside = evaluate_against_pool(dict(per_seed), deck, [holdout], h.seeds, h.episodes, cfg.engine.turn_cap)
            in_by_seed = inside.groupby('seed')['win_rate'].mean()
            out_by_seed = outside.groupby('seed')['win_rate'].mean()
            for s in h.seeds:
                rows.append({'agent': agent, 'seed': s, 'fold': holdout,
                             'in_rate': float(in_by_seed[s]), 'out_rate': float(out_by_seed[s])})
    report = transfer_from_rates(pd.DataFrame(rows), B=h.resamples)
    report.tables['fold_rates'] = pd.DataFrame(rows)
    report.meta['deck'] = deck
    return report


def ablation_from_rates(rates: pd.DataFrame, baseline: str = 'ppo', B: int = 10000, seed: int = 0) -> StatReport:
    if rates.empty:
        raise ValueError('no ablation rates')
    rows = []
    base = rates[rates['agent'] == baseline]
    for variant, group in rates.groupby('agent', sort=False):
        wins, n = int(group['wins'].sum()), int(group['episodes'].sum())
        lo, hi = wilson_interval(wins, n)
        row = {'variant': variant, 'win_rate': wins / n, 'ci_lo': lo, 'ci_hi': hi,
               'n_s': int(group['seed'].nunique()), 'delta': np.nan, 'p_boot': np.nan}
        if variant != baseline and not base.empty:
            x, y = _check_paired(group, base, ('seed', 'opponent'))
            test = paired_bootstrap_test(x, y, B=B, seed=seed)
            row.update({'delta': 100.0 * test.statistic, 'p_boot': test.p_value})
        rows.append(row)
    table = apply_holm(pd.DataFrame(rows))
    family = list(table.loc[table['p_boot'].notna(), 'variant'])
    return StatReport('ablation', {'ablation': table}, {'ablation': family},
                      {'baseline': baseline, 'resamples': B, 'ci_method': 'wilson'})


def run_ablation(cfg: ArenaConfig, run_dir: str, variants: Sequence[str] = tuple(VARIANTS),
                 checkpoints: Optional[Mapping[str, Mapping[int, str]]] = None) -> StatReport:
    """Train (when no checkpoint is given) and evaluate each variant on the diagnostic deck."""
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f'Unknown variant(s) {unknown}. Expected some of {list(VARIANTS)}')
    h = cfg.harness
    deck = h.ablation_deck
    models_dir = os.path.join(run_dir, 'models')
    frames = []
    for variant in variants:
        per_seed = dict((checkpoints or {}).get(variant, {}))
        for s in h.seeds:
            if s not in per_seed:
                per_seed[s] = train_agent(variant, deck, ARCHETYPES, cfg, s, models_dir)['path']
        frame = evaluate_against_pool(per_seed, deck, ARCHETYPES, h.seeds, h.episodes, cfg.engine.turn_cap)
        frames.append(frame.assign(agent=variant))
    rates = pd.concat(frames, ignore_index=True)
    report = ablation_from_rates(rates, baseline=variants[0], B=h.resamples)
    report.tables['rates'] = rates
    report.meta['deck'] = deck
    return report


# ---------------------------------------------------------------------------
# checkpoint discovery and training grids

def discover_checkpoints(models_dir: str) -> Dict[str, Dict[str, Dict[Any, Dict[int, str]]]]:
    """{'pool': {kind: {deck: {seed: path}}}, 'holdout': {kind: {holdout: {seed: path}}}}."""
    found: Dict[str, Dict[str, Dict[Any, Dict[int, str]]]] = {'pool': {}, 'holdout': {}}
    if not os.path.isdir(models_dir):
        return found
    for name in sorted(os.listdir(models_dir)):
        m = _CHECKPOINT_RE.match(name)
        if not m:
            continue
        path = os.path.join(models_dir, name)
        seed = int(m.group('seed'))
        if m.group('holdout'):
            found['holdout'].setdefault(m.group('kind'), {}).setdefault(m.group('holdout'), {})[seed] = path
        else:
            found['pool'].setdefault(m.group('kind'), {}).setdefault(m.group('deck'), {})[seed] = path
    return found


def train_grid(cfg: ArenaConfig, run_dir: str, agents: Sequence[str], decks: Sequence[str],
               holdouts: Sequence[Optional[str]] = (None,)) -> List[str]:
    """Train every (agent, deck, seed[, holdout]) cell that has no checkpoint yet."""
    models_dir = os.path.join(run_dir, 'models')
    paths = []
    for agent in agents:
        for deck in decks:
            for holdout in holdouts:
                pool = [a for a in ARCHETYPES if a != holdout]
                for s in cfg.harness.seeds:
                    path = os.path.join(models_dir, checkpoint_name(agent, deck, s, holdout))
                    if not os.path.exists(path):
                        train_agent(agent, deck, pool, cfg, s, models_dir, holdout)
                    paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# case study

def case_study(checkpoint_path: str, deck: str, opponent: str, seed: int = 0,
               gamma: float = 0.995, lam: float = 0.95, turn_cap: int = 30) -> pd.DataFrame:
    """Per-turn means of V_k, A_k and ε_k over one greedy episode."""
    checkpoint = load_checkpoint(checkpoint_path)
    net = restore(checkpoint)['net']
    env = ArenaEnv(deck, [opponent], turn_cap=turn_cap, seed=seed, schedule='fixed', alternate_first=False)
    obs, info = env.reset(seed=seed)
    steps = []
    done = False
    while not done:
        turn = env.state.turn
        out = net.forward(obs, info['action_mask'])
        action = int(np.argmax(np.where(info['action_mask'], out['log_probs'][0], -np.inf)))
        obs, _, terminated, truncated, info = env.step(action)
        done = terminated or truncated
        steps.append({'turn': turn, 'v': out['factor_values'][0], 'r': info['factor_reward'],
                      'eps': info['epsilon'], 'done': done})
    V = np.stack([s['v'] for s in steps])
    R = np.stack([s['r'] for s in steps])
    dones = np.array([s['done'] for s in steps])
    A = np.stack([gae(R[:, k], V[:, k], dones, 0.0, gamma, lam) for k in range(N_FACTORS)], axis=1)
    E = np.stack([s['eps'] for s in steps])
    frame = pd.DataFrame({'turn': [s['turn'] for s in steps]})
    for k, f in enumerate(FACTORS):
        frame[f'V.{f}'] = V[:, k]
        frame[f'A.{f}'] = A[:, k]
        frame[f'eps.{f}'] = E[:, k]
    per_turn = frame.groupby('turn').mean().reset_index()
    per_turn['outcome'] = info['outcome']
    return per_turn
