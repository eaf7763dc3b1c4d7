"""Hand-specified structural causal model over thirteen strategic variables.

Values follow the structural equations; the drawn edge list decides which
variables a do() intervention re-evaluates. A re-evaluated variable whose
equation ignores the intervened parent comes back unchanged.
"""
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Deque, Dict, Iterable, List, Mapping, Optional, Set, Tuple
import json
import logging
import os

import networkx as nx
import numpy as np
from sklearn.preprocessing import StandardScaler

from actions import PERMANENT_SLOTS, decode
from cards import DATA_DIR, CardDef
from engine import GameState, IllegalActionError, card_of, legal_decisions, valid_targets

logger = logging.getLogger(__name__)

VARIABLES: Tuple[str, ...] = (
    'mana_t', 'land_drop', 'mana_creatures', 'mana_t1', 'card_count', 'has_removal',
    'board_press', 'threat_density', 'card_adv', 'tempo', 'life_buffer', 'removal_avail', 'win_prob',
)
FACTORS: Tuple[str, ...] = ('card_adv', 'board_press', 'tempo', 'life_buffer', 'threat_density', 'removal_avail')
N_FACTORS = len(FACTORS)

RANGES: Dict[str, Tuple[float, float]] = {
    'mana_t': (0, 10), 'land_drop': (0, 1), 'mana_creatures': (0, 10), 'mana_t1': (0, 10),
    'card_count': (0, 15), 'has_removal': (0, 1), 'board_press': (-20, 20), 'threat_density': (0, 1),
    'card_adv': (-10, 10), 'tempo': (-1, 1), 'life_buffer': (-20, 20), 'removal_avail': (0, 1),
    'win_prob': (0, 1),
}

EDGES: Tuple[Tuple[str, str], ...] = (
    ('mana_t', 'mana_t1'), ('mana_creatures', 'mana_t1'), ('land_drop', 'mana_t1'),
    ('mana_t', 'tempo'),
    ('mana_t1', 'board_press'), ('mana_t1', 'threat_density'),
    ('threat_density', 'board_press'),
    ('board_press', 'card_adv'), ('board_press', 'tempo'), ('board_press', 'win_prob'),
    ('card_count', 'card_adv'),
    ('has_removal', 'removal_avail'),
    ('card_adv', 'win_prob'), ('tempo', 'win_prob'), ('life_buffer', 'win_prob'),
    ('threat_density', 'win_prob'), ('removal_avail', 'win_prob'),
)

PRIOR_WEIGHT = 0.1
OUTCOME_BUFFER_SIZE = 2000
REFIT_EVERY = 200
FIT_STEPS = 200
FIT_LR = 0.01
LOGIT_LIMIT = 30.0
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Exogenous:
    """Board measurements the equations read besides graph parents."""

    own_power: float = 0.0
    opp_power: float = 0.0
    own_threats: float = 0.0
    own_permanents: float = 0.0
    opp_permanents: float = 0.0
    mana_spent: float = 0.0
    opp_mana_spent: float = 0.0
    opp_mana: float = 0.0


@dataclass(frozen=True)
class CausalVars:
    values: Mapping[str, float]
    exo: Exogenous = field(default_factory=Exogenous)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def to_dict(self) -> Dict[str, float]:
        return {k: float(self.values[k]) for k in VARIABLES}


@dataclass
class WinWeights:
    w: np.ndarray
    intercept: float = 0.0
    means: np.ndarray = field(default_factory=lambda: np.zeros(N_FACTORS))
    stds: np.ndarray = field(default_factory=lambda: np.ones(N_FACTORS))

    @classmethod
    def prior(cls) -> 'WinWeights':
        return cls(w=np.full(N_FACTORS, PRIOR_WEIGHT))

    def standardize(self, phi: np.ndarray) -> np.ndarray:
        return (np.asarray(phi, dtype=float) - self.means) / np.maximum(self.stds, STD_FLOOR)

    def probability(self, phi: np.ndarray) -> float:
        logit = float(self.w @ self.standardize(phi)) + self.intercept
        return float(1.0 / (1.0 + np.exp(-np.clip(logit, -LOGIT_LIMIT, LOGIT_LIMIT))))

    def to_dict(self) -> Dict[str, Any]:
        return {'w': self.w.tolist(), 'intercept': self.intercept,
                'means': self.means.tolist(), 'stds': self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'WinWeights':
        return cls(w=np.asarray(d['w'], dtype=float), intercept=float(d['intercept']),
                   means=np.asarray(d['means'], dtype=float), stds=np.asarray(d['stds'], dtype=float))


# ---------------------------------------------------------------------------
# graph

@lru_cache(maxsize=1)
def build_graph() -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(VARIABLES)
    graph.add_edges_from(EDGES)
    if not nx.is_directed_acyclic_graph(graph):
        raise ValueError('Causal graph must be acyclic')
    return graph


@lru_cache(maxsize=1)
def topological_order() -> Tuple[str, ...]:
    """Topological order with ties broken by listing order."""
    return tuple(nx.lexicographical_topological_sort(build_graph(), key=VARIABLES.index))


def descendants(graph: Optional[nx.DiGraph], var: str) -> Set[str]:
    graph = graph if graph is not None else build_graph()
    if var not in graph:
        raise ValueError(f"Unknown causal variable '{var}'")
    return set(nx.descendants(graph, var))


def parents(var: str) -> List[str]:
    return sorted(build_graph().predecessors(var), key=VARIABLES.index)


def export_dot(graph: Optional[nx.DiGraph] = None) -> str:
    graph = graph if graph is not None else build_graph()
    lines = ['digraph scm {', '  rankdir=TB;']
    lines += [f'  {n};' for n in VARIABLES]
    lines += [f'  {u} -> {v};' for u, v in graph.edges()]
    lines.append('}')
    return '\n'.join(lines) + '\n'


def graph_to_dict() -> Dict[str, Any]:
    return {'nodes': list(VARIABLES), 'edges': [list(e) for e in EDGES], 'factors': list(FACTORS)}


# ---------------------------------------------------------------------------
# equations

def _clip(name: str, value: float) -> float:
    lo, hi = RANGES[name]
    return float(min(max(value, lo), hi))


def factor_vector(vars: CausalVars) -> np.ndarray:
    return np.array([vars.values[k] for k in FACTORS], dtype=float)


def _eq_win_prob(v: Dict[str, float], exo: Exogenous, weights: WinWeights) -> float:
    return weights.probability(np.array([v[k] for k in FACTORS], dtype=float))


EQUATIONS = {
    'mana_t1': lambda v, exo, w: v['mana_t'] + v['land_drop'] + v['mana_creatures'],
    'board_press': lambda v, exo, w: exo.own_power - exo.opp_power,
    'threat_density': lambda v, exo, w: exo.own_threats / max(1.0, exo.own_permanents),
    'card_adv': lambda v, exo, w: exo.own_permanents - exo.opp_permanents,
    'tempo': lambda v, exo, w: (exo.mana_spent / max(1.0, v['mana_t'])
                                - exo.opp_mana_spent / max(1.0, exo.opp_mana)),
    'removal_avail': lambda v, exo, w: v['has_removal'],
    'win_prob': _eq_win_prob,
}


def structural_eval(vars: CausalVars, weights: Optional[WinWeights] = None) -> CausalVars:
    """Recompute every variable with graph parents, in topological order."""
    weights = weights or WinWeights.prior()
    values = dict(vars.values)
    for node in topological_order():
        if node in EQUATIONS:
            values[node] = _clip(node, EQUATIONS[node](values, vars.exo, weights))
    return CausalVars(values, vars.exo)


def do_intervene(vars: CausalVars, assignments: Mapping[str, float],
                 weights: Optional[WinWeights] = None) -> CausalVars:
    """Fix the assigned variables and re-evaluate only their descendants."""
    weights = weights or WinWeights.prior()
    graph = build_graph()
    for name, value in assignments.items():
        if name not in RANGES:
            raise ValueError(f"Unknown causal variable '{name}'")
        lo, hi = RANGES[name]
        if not lo <= value <= hi:
            raise ValueError(f'{name}={value} outside range [{lo}, {hi}]')
    values = dict(vars.values)
    values.update({k: float(v) for k, v in assignments.items()})
    affected: Set[str] = set()
    for name in assignments:
        affected |= descendants(graph, name)
    affected -= set(assignments)
    for node in topological_order():
        if node in affected:
            values[node] = _clip(node, EQUATIONS[node](values, vars.exo, weights))
    return CausalVars(values, vars.exo)


def win_prob(vars: CausalVars, weights: WinWeights) -> float:
    return weights.probability(factor_vector(vars))


def extract(state: GameState, perspective: int, weights: Optional[WinWeights] = None) -> CausalVars:
    """Measure the leaf variables and exogenous terms from `perspective`'s seat."""
    me, opp = state.players[perspective], state.players[1 - perspective]
    own_cards = [p.definition for p in me.battlefield]
    opp_cards = [p.definition for p in opp.battlefield]
    hand = [card_of(c) for c in me.hand]
    exo = Exogenous(
        own_power=float(sum(max(0, p.power) for p in me.creatures())),
        opp_power=float(sum(max(0, p.power) for p in opp.creatures())),
        own_threats=float(sum(1 for c in own_cards if c.flags.is_threat)),
        own_permanents=float(len(own_cards)),
        opp_permanents=float(len(opp_cards)),
        mana_spent=float(state.mana_spent[perspective]),
        opp_mana_spent=float(state.mana_spent[1 - perspective]),
        opp_mana=float(sum(1 for c in opp_cards if c.flags.mana_producer)),
    )
    leaves = {
        'mana_t': _clip('mana_t', sum(1 for c in own_cards if c.flags.mana_producer)),
        'land_drop': float(any(c.is_land for c in hand)),
        'mana_creatures': _clip('mana_creatures', sum(1 for c in own_cards if c.flags.mana_producer and c.is_creature)),
        'card_count': _clip('card_count', len(hand)),
        'has_removal': float(any(c.flags.is_removal for c in hand)),
        'life_buffer': _clip('life_buffer', me.life - opp.life),
    }
    values = {name: 0.0 for name in VARIABLES}
    values.update(leaves)
    return structural_eval(CausalVars(values, exo), weights)


# ---------------------------------------------------------------------------
# interventions

@lru_cache(maxsize=1)
def intervention_table() -> Dict[str, Any]:
    with open(os.path.join(DATA_DIR, 'interventions.json'), 'r', encoding='utf-8') as fh:
        return json.load(fh)


class _Delta:
    """Accumulates additive deltas, absolute sets and permanent-count changes."""

    def __init__(self):
        self.add: Dict[str, float] = {}
        self.set: Dict[str, float] = {}
        self.threats = 0.0
        self.permanents = 0.0

    def bump(self, var: str, amount: float) -> None:
        self.add[var] = self.add.get(var, 0.0) + amount

    def empty(self) -> bool:
        return not (self.add or self.set or self.threats or self.permanents)


def _best_opposing_target(state: GameState, player: int, card: CardDef, lethal_damage: Optional[int] = None):
    """Highest-power opposing permanent the card can legally target (lowest ordinal on ties)."""
    opp = state.players[1 - player]
    best = None
    for slot in valid_targets(state, player, card):
        if not PERMANENT_SLOTS <= slot < 2 * PERMANENT_SLOTS:
            continue
        perm = opp.at_slot(slot - PERMANENT_SLOTS)
        if lethal_damage is not None and (not perm.definition.is_creature
                                          or perm.toughness - perm.damage_marked > lethal_damage):
            continue
        if best is None or perm.power > best.power:
            best = perm
    return best


def _effect_delta(state: GameState, player: int, card: CardDef, effect: Dict[str, Any], acc: _Delta,
                  vars: CausalVars) -> None:
    op = effect['op']
    table = intervention_table()['effects']
    if op == 'deal_damage':
        victim = _best_opposing_target(state, player, card, lethal_damage=effect['amount'])
        if victim is not None:
            acc.bump('board_press', max(0, victim.power))
            acc.bump('card_adv', 1)
        elif effect.get('target') == 'any':
            acc.bump('life_buffer', effect['amount'])
    elif op == 'destroy':
        if effect.get('target') == 'all_creatures':
            me, opp = state.players[player], state.players[1 - player]
            acc.bump('board_press', -vars.exo.own_power + vars.exo.opp_power)
            acc.bump('card_adv', -len(me.creatures()) + len(opp.creatures()))
            acc.threats -= sum(1 for p in me.creatures() if p.definition.flags.is_threat)
            acc.permanents -= len(me.creatures())
        else:
            victim = _best_opposing_target(state, player, card)
            if victim is not None:
                if victim.definition.is_creature:
                    acc.bump('board_press', max(0, victim.power))
                acc.bump('card_adv', 1)
    else:
        amount = effect.get('amount', 1)
        for rule in table.get(op, []):
            source = rule['add']
            if source == 'amount':
                acc.bump(rule['var'], amount)
            elif source == 'power':
                acc.bump(rule['var'], effect.get('power', 0))
            elif source == 'token_power':
                acc.bump(rule['var'], (card_of(effect['token']).power or 0) * amount)
            elif source == 'threat_share':
                acc.threats += amount * float(card_of(effect['token']).flags.is_threat)
                acc.permanents += amount
            elif source == 'one':
                acc.bump(rule['var'], 1)


def intervention_for(state: GameState, action: int, vars: CausalVars) -> Dict[str, float]:
    """Map an action to do() assignments (absolute values, clipped to range)."""
    category, slot = decode(action)
    player = state.decision_player
    acc = _Delta()
    if category == 'PLAY_LAND':
        for rule in intervention_table()['actions']['PLAY_LAND']:
            if 'set' in rule:
                acc.set[rule['var']] = float(rule['set'])
            else:
                acc.bump(rule['var'], 1)
    elif category in ('CAST_SORCERY', 'CAST_INSTANT'):
        card = card_of(state.players[player].hand[slot])
        if not card.flags.is_counter:
            if card.is_permanent:
                acc.bump('card_adv', 1)
                acc.permanents += 1
                acc.threats += float(card.flags.is_threat)
                if card.is_creature:
                    acc.bump('board_press', max(0, card.power))
            for effect in card.effects:
                _effect_delta(state, player, card, effect, acc, vars)
    elif category == 'ACTIVATE':
        perm = state.players[player].at_slot(slot)
        for effect in perm.definition.activated:
            _effect_delta(state, player, perm.definition, effect, acc, vars)
    if acc.empty():
        return {}

    out = {k: _clip(k, v) for k, v in acc.set.items()}
    for var, delta in acc.add.items():
        if delta:
            out[var] = _clip(var, vars.values[var] + delta)
    if acc.threats or acc.permanents:
        threats = vars.exo.own_threats + acc.threats
        perms = vars.exo.own_permanents + acc.permanents
        out['threat_density'] = _clip('threat_density', threats / max(1.0, perms))
    return out


def intervention_effect(state: GameState, action: int, weights: Optional[WinWeights] = None) -> np.ndarray:
    """SCM-predicted per-factor change for taking `action`, without simulating."""
    category, slot = decode(int(action))
    if (category, slot) not in legal_decisions(state):
        raise IllegalActionError(f'Action {action} ({category}, {slot}) is not legal')
    weights = weights or WinWeights.prior()
    before = extract(state, state.decision_player, weights)
    assignments = intervention_for(state, int(action), before)
    if not assignments:
        return np.zeros(N_FACTORS)
    after = do_intervene(before, assignments, weights)
    return factor_vector(after) - factor_vector(before)


# ---------------------------------------------------------------------------
# online win-probability head

class OutcomeBuffer:
    """Ring buffer of (terminal factor vector, win label)."""

    def __init__(self, capacity: int = OUTCOME_BUFFER_SIZE):
        self.capacity = capacity
        self._items: Deque[Tuple[np.ndarray, float]] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, phi: Iterable[float], won: bool) -> None:
        self._items.append((np.asarray(phi, dtype=float), float(won)))

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self._items:
            return np.zeros((0, N_FACTORS)), np.zeros(0)
        X = np.stack([phi for phi, _ in self._items])
        y = np.array([label for _, label in self._items])
        return X, y


def fit_winprob(buffer: OutcomeBuffer, weights: WinWeights, steps: int = FIT_STEPS,
                lr: float = FIT_LR) -> WinWeights:
    """Z-score the buffer and run full-batch logistic gradient steps from the current weights."""
    if len(buffer) == 0:
        return weights
    X, y = buffer.arrays()
    scaler = StandardScaler().fit(X)
    Z = scaler.transform(X)
    w = weights.w.astype(float).copy()
    b = float(weights.intercept)
    n = len(y)
    for _ in range(steps):
        logits = np.clip(Z @ w + b, -LOGIT_LIMIT, LOGIT_LIMIT)
        p = 1.0 / (1.0 + np.exp(-logits))
        err = p - y
        w -= lr * (Z.T @ err) / n
        b -= lr * float(err.mean())
    if not np.all(np.isfinite(w)):
        logger.warning('winprob fit produced non-finite weights; keeping previous')
        return weights
    return WinWeights(w=w, intercept=b, means=scaler.mean_.copy(), stds=scaler.scale_.copy())


class WinProbLearner:
    """Outcome buffer plus weights, refit every `refit_every` terminal games."""

    def __init__(self, weights: Optional[WinWeights] = None, refit_every: int = REFIT_EVERY,
                 capacity: int = OUTCOME_BUFFER_SIZE):
        self.weights = weights or WinWeights.prior()
        self.buffer = OutcomeBuffer(capacity)
        self.refit_every = refit_every
        self.games = 0

    def record(self, phi: Iterable[float], won: bool) -> bool:
        self.buffer.add(phi, won)
        self.games += 1
        if self.games % self.refit_every == 0:
            self.weights = fit_winprob(self.buffer, self.weights)
            logger.info('winprob refit games=%d w=%s', self.games, np.round(self.weights.w, 4).tolist())
            return True
        return False
