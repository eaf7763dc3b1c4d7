"""Encode a game state from one seat into the fixed 3,077-value observation.

Opponent hand contents and library order never reach the vector; only their
sizes do. Every value is clipped to [0, 1].
"""
from typing import Any, Dict, List, Tuple

import numpy as np

from actions import HAND_SLOTS, PERMANENT_SLOTS
from cards import COLORS, POOL_SIZE, default_catalog
from engine import (MAX_MULLIGANS, PENDING_KINDS, PHASES, GameState, Permanent,
                    legal_decisions, mana_sources)

LAYOUT_VERSION = 1
OBS_DIM = 3077

HAND_FEATURES = 1 + POOL_SIZE + 7
PERMANENT_FEATURES = 19

# divisors that scale counts into [0, 1]
LIFE_SCALE = 20.0
HAND_SCALE = 15.0
LIBRARY_SCALE = 60.0
STAT_SCALE = 10.0
MANA_SCALE = 10.0
POWER_SCALE = 20.0
GRAVEYARD_COPY_SCALE = 4.0

SEGMENTS: Tuple[Tuple[str, int, str], ...] = (
    ('globals', 12, 'life, turn, seat, hand/library sizes, mulligans, land drop'),
    ('phase', len(PHASES), 'one-hot over the seven phases'),
    ('pending', len(PENDING_KINDS), 'one-hot over pending decision kinds'),
    ('hand', HAND_SLOTS * HAND_FEATURES, 'per hand slot: present, card one-hot, cost, power, toughness, land, removal, threat, castable'),
    ('own_battlefield', PERMANENT_SLOTS * PERMANENT_FEATURES, 'per own permanent slot'),
    ('opp_battlefield', PERMANENT_SLOTS * PERMANENT_FEATURES, 'per opponent permanent slot'),
    ('graveyards', 2 * POOL_SIZE, 'per-card copy counts, own then opponent'),
    ('mana', 12, 'sources, colours available, mana spent this turn'),
    ('opponent_public', 6, 'hand count, library, graveyard, permanents, power, mulligans'),
)


def layout_spec() -> List[Dict[str, Any]]:
    """Frozen (name, offset, length, semantics) table."""
    table, offset = [], 0
    for name, length, semantics in SEGMENTS:
        table.append({'name': name, 'offset': offset, 'length': length, 'semantics': semantics})
        offset += length
    return table


_OFFSETS = {row['name']: row['offset'] for row in layout_spec()}
assert sum(length for _, length, _ in SEGMENTS) == OBS_DIM


def _permanent_features(perm: Permanent) -> np.ndarray:
    card = perm.definition
    colors = card.colors
    return np.array([
        1.0,
        float(card.is_land),
        float(card.is_creature),
        float(card.is_permanent and not card.is_creature and not card.is_land),
        float(perm.is_token),
        float(perm.tapped),
        float(perm.summoning_sick),
        float(perm.attacking),
        float(perm.blocking is not None),
        perm.power / STAT_SCALE,
        perm.toughness / STAT_SCALE,
        perm.damage_marked / STAT_SCALE,
        float(card.flags.is_threat),
        float(card.flags.mana_producer),
    ] + [float(c in colors) for c in COLORS])


def _battlefield_block(state: GameState, player: int) -> np.ndarray:
    block = np.zeros((PERMANENT_SLOTS, PERMANENT_FEATURES))
    ps = state.players[player]
    for perm in ps.addressable():
        block[perm.slot] = _permanent_features(perm)
    return block.ravel()


def encode(state: GameState, perspective: int) -> np.ndarray:
    """Observation vector for `perspective` (0 or 1)."""
    catalog = default_catalog()
    me, opp = state.players[perspective], state.players[1 - perspective]
    obs = np.zeros(OBS_DIM)

    o = _OFFSETS['globals']
    obs[o:o + 12] = [
        me.life / LIFE_SCALE,
        opp.life / LIFE_SCALE,
        state.turn / state.turn_cap,
        float(state.active_player == perspective),
        float(state.decision_player == perspective),
        len(me.hand) / HAND_SCALE,
        len(opp.hand) / HAND_SCALE,
        len(me.library) / LIBRARY_SCALE,
        len(opp.library) / LIBRARY_SCALE,
        me.mulligans_taken / MAX_MULLIGANS,
        opp.mulligans_taken / MAX_MULLIGANS,
        float(state.land_played_this_turn[perspective]),
    ]
    obs[_OFFSETS['phase'] + PHASES.index(state.phase)] = 1.0
    obs[_OFFSETS['pending'] + PENDING_KINDS.index(state.pending_kind)] = 1.0

    playable = set()
    if state.outcome is None and state.decision_player == perspective:
        playable = {slot for cat, slot in legal_decisions(state)
                    if cat in ('PLAY_LAND', 'CAST_SORCERY', 'CAST_INSTANT')}
    o = _OFFSETS['hand']
    for i, card_id in enumerate(me.hand[:HAND_SLOTS]):
        card = catalog.get(card_id)
        row = np.zeros(HAND_FEATURES)
        row[0] = 1.0
        row[1 + card.index] = 1.0
        row[1 + POOL_SIZE:] = [
            card.cost.total / STAT_SCALE,
            (card.power or 0) / STAT_SCALE,
            (card.toughness or 0) / STAT_SCALE,
            float(card.is_land),
            float(card.flags.is_removal),
            float(card.flags.is_threat),
            float(i in playable),
        ]
        obs[o + i * HAND_FEATURES:o + (i + 1) * HAND_FEATURES] = row

    n = PERMANENT_SLOTS * PERMANENT_FEATURES
    obs[_OFFSETS['own_battlefield']:_OFFSETS['own_battlefield'] + n] = _battlefield_block(state, perspective)
    obs[_OFFSETS['opp_battlefield']:_OFFSETS['opp_battlefield'] + n] = _battlefield_block(state, 1 - perspective)

    o = _OFFSETS['graveyards']
    for side, ps in enumerate((me, opp)):
        for card_id in ps.graveyard:
            obs[o + side * POOL_SIZE + catalog.get(card_id).index] += 1.0 / GRAVEYARD_COPY_SCALE

    own_untapped = mana_sources(state, perspective)
    own_all = [p for p in me.battlefield if p.definition.flags.mana_producer]
    opp_all = [p for p in opp.battlefield if p.definition.flags.mana_producer]
    opp_untapped = [p for p in opp_all if not p.tapped]
    o = _OFFSETS['mana']
    obs[o:o + 12] = [
        len(own_untapped) / MANA_SCALE,
        len(own_all) / MANA_SCALE,
    ] + [sum(1 for s in own_untapped if c in s.colors) / MANA_SCALE for c in COLORS] + [
        len(opp_all) / MANA_SCALE,
        len(opp_untapped) / MANA_SCALE,
        state.mana_spent[perspective] / MANA_SCALE,
        state.mana_spent[1 - perspective] / MANA_SCALE,
        sum(1 for p in own_all if p.definition.is_creature) / MANA_SCALE,
    ]

    o = _OFFSETS['opponent_public']
    obs[o:o + 6] = [
        len(opp.hand) / HAND_SCALE,
        len(opp.library) / LIBRARY_SCALE,
        len(opp.graveyard) / LIBRARY_SCALE,
        len(opp.battlefield) / LIBRARY_SCALE,
        sum(max(0, p.power) for p in opp.creatures()) / POWER_SCALE,
        opp.mulligans_taken / MAX_MULLIGANS,
    ]
    return np.clip(obs, 0.0, 1.0)


def segment(obs: np.ndarray, name: str) -> np.ndarray:
    row = next(r for r in layout_spec() if r['name'] == name)
    return obs[row['offset']:row['offset'] + row['length']]
