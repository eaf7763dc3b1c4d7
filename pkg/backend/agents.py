"""Non-learned reference policies: uniform random and scripted heuristics.

Heuristic priority: mulligan by land count, play a land, cast removal on the
biggest opposing threat, cast the most expensive useful spell, attack by
aggression level, block to survive lethal and block favourably when low,
then pass.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set, Tuple

import numpy as np

from actions import PERMANENT_SLOTS, TARGET_OPP_PLAYER, encode, mask_from_decisions
from cards import ARCHETYPES
from engine import GameState, Permanent, can_block, card_of, legal_decisions, valid_targets

AGGRESSION_LEVELS = ('defensive', 'favorable', 'all')

Policy = Callable[[GameState, np.random.Generator], int]


@dataclass(frozen=True)
class HeuristicParams:
    mulligan_land_range: Tuple[int, int]
    aggression: str
    defensive_life_threshold: Optional[int] = None

    def __post_init__(self):
        lo, hi = self.mulligan_land_range
        if lo > hi:
            raise ValueError(f'mulligan_land_range must satisfy lo <= hi, got {self.mulligan_land_range}')
        if self.aggression not in AGGRESSION_LEVELS:
            raise ValueError(f"Unknown aggression '{self.aggression}'")


DEFAULT_PARAMS: Dict[str, HeuristicParams] = {
    'mono_red_aggro': HeuristicParams((1, 5), 'all', None),
    'boros_convoke': HeuristicParams((1, 5), 'all', None),
    'dimir_midrange': HeuristicParams((2, 5), 'favorable', 6),
    'azorius_control': HeuristicParams((2, 5), 'defensive', 8),
    'domain_ramp': HeuristicParams((2, 5), 'defensive', 8),
}


def params_for(archetype: str) -> HeuristicParams:
    if archetype not in DEFAULT_PARAMS:
        raise ValueError(f"Unknown archetype '{archetype}'. Expected one of {list(ARCHETYPES)}")
    return DEFAULT_PARAMS[archetype]


def random_act(mask: np.ndarray, rng: np.random.Generator) -> int:
    """Uniform over set bits; one `rng.integers` draw per call."""
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise ValueError('Cannot act on an all-zero action mask')
    return int(legal[rng.integers(0, legal.size)])


# ---------------------------------------------------------------------------
# heuristic helpers

def _slots(legal: Set[Tuple[str, int]], category: str) -> List[int]:
    return sorted(s for c, s in legal if c == category)


def _survives(blocker: Permanent, attacker: Permanent) -> bool:
    return blocker.toughness - blocker.damage_marked > attacker.power and not attacker.has_keyword('deathtouch')


def _kills(blocker: Permanent, attacker: Permanent) -> bool:
    return (blocker.power >= attacker.toughness - attacker.damage_marked
            or (blocker.has_keyword('deathtouch') and blocker.power > 0))


def _incoming_damage(state: GameState) -> int:
    attackers = state.players[state.active_player].battlefield
    defender = state.players[1 - state.active_player]
    blocked = {p.blocking for p in defender.battlefield if p.blocking is not None}
    return sum(max(0, a.power) for a in attackers if a.attacking and a.ordinal not in blocked)


def _mulligan(state: GameState, params: HeuristicParams, legal) -> int:
    ps = state.players[state.decision_player]
    lands = sum(1 for c in ps.hand if card_of(c).is_land)
    lo, hi = params.mulligan_land_range
    if lo <= lands <= hi or ('MULLIGAN', 0) not in legal:
        return encode('KEEP')
    return encode('MULLIGAN')


def _bottom(state: GameState, legal) -> int:
    hand = state.players[state.decision_player].hand
    slots = _slots(legal, 'BOTTOM')
    lands = sum(1 for c in hand if card_of(c).is_land)
    if lands > 3:
        pick = next((i for i in slots if card_of(hand[i]).is_land), slots[-1])
    else:
        pick = max(slots, key=lambda i: (card_of(hand[i]).cost.total, -i))
    return encode('BOTTOM', pick)


def _choose_target(state: GameState, params: HeuristicParams, legal) -> int:
    p = state.decision_player
    card = card_of(state.top.data['spell']['card'])
    targets = _slots(legal, 'TARGET')
    own, opp = state.players[p], state.players[1 - p]
    spec = card.target_spec()
    if spec == 'own_creature':
        own_slots = [t for t in targets if t < PERMANENT_SLOTS]
        if own_slots:
            best = max(own_slots, key=lambda t: (own.at_slot(t).attacking, own.at_slot(t).power, -t))
            return encode('TARGET', best)
        return encode('CANCEL')

    opp_slots = [t for t in targets if PERMANENT_SLOTS <= t < 2 * PERMANENT_SLOTS]
    damage = next((e['amount'] for e in card.effects if e['op'] == 'deal_damage'), None)
    if damage is not None:
        killable = [t for t in opp_slots
                    if opp.at_slot(t - PERMANENT_SLOTS).toughness - opp.at_slot(t - PERMANENT_SLOTS).damage_marked <= damage]
        if killable:
            return encode('TARGET', max(killable, key=lambda t: (opp.at_slot(t - PERMANENT_SLOTS).power, -t)))
        if TARGET_OPP_PLAYER in targets:
            return encode('TARGET', TARGET_OPP_PLAYER)
    if opp_slots:
        return encode('TARGET', max(opp_slots, key=lambda t: (opp.at_slot(t - PERMANENT_SLOTS).power, -t)))
    return encode('CANCEL')


def _response(state: GameState, legal) -> int:
    spell = card_of(state.top.data['spell']['card'])
    counters = _slots(legal, 'CAST_INSTANT')
    if counters and (spell.flags.is_threat or spell.flags.is_removal or spell.cost.total >= 3):
        return encode('CAST_INSTANT', counters[0])
    return encode('PASS')


def _choose_blocker(state: GameState, legal) -> int:
    p = state.decision_player
    own = state.players[p]
    attacker = state.players[1 - p].by_ordinal(state.top.data['attacker'])
    options = [own.at_slot(s) for s in _slots(legal, 'BLOCK_SELECT_BLOCKER')]
    if not options:
        return encode('CANCEL')
    good = [b for b in options if _survives(b, attacker) and _kills(b, attacker)]
    safe = [b for b in options if _survives(b, attacker)]
    trade = [b for b in options if _kills(b, attacker)]
    pool = good or safe or trade or options
    if pool is options:
        pick = min(pool, key=lambda b: (b.power, b.toughness, b.ordinal))
    else:
        pick = min(pool, key=lambda b: (b.power + b.toughness, b.ordinal))
    return encode('BLOCK_SELECT_BLOCKER', pick.slot)


def _declare_blocks(state: GameState, params: HeuristicParams, legal) -> int:
    p = state.decision_player
    own = state.players[p]
    attackers = [state.players[1 - p].at_slot(s) for s in _slots(legal, 'BLOCK_SELECT_ATTACKER')]
    if not attackers:
        return encode('PASS')
    eligible = lambda a: [b for b in own.addressable() if can_block(b, a)]
    if _incoming_damage(state) >= own.life:
        biggest = max(attackers, key=lambda a: (a.power, -a.ordinal))
        return encode('BLOCK_SELECT_ATTACKER', biggest.slot)
    threshold = params.defensive_life_threshold
    if threshold is not None and own.life < threshold:
        for atk in sorted(attackers, key=lambda a: (-a.power, a.ordinal)):
            if any(_survives(b, atk) for b in eligible(atk)):
                return encode('BLOCK_SELECT_ATTACKER', atk.slot)
    return encode('PASS')


def _attack(state: GameState, params: HeuristicParams, legal) -> int:
    p = state.decision_player
    own, opp = state.players[p], state.players[1 - p]
    blockers = [b for b in opp.creatures() if not b.tapped]
    for slot in _slots(legal, 'ATTACK_TOGGLE'):
        perm = own.at_slot(slot)
        if params.aggression == 'all':
            want = True
        else:
            able = [b for b in blockers if can_block(b, perm)]
            safe = all(not _kills(b, perm) or _kills(perm, b) and b.power + b.toughness >= perm.power + perm.toughness
                       for b in able)
            want = not able or safe
            if params.aggression == 'defensive' and params.defensive_life_threshold is not None:
                want = want and (not able or own.life >= params.defensive_life_threshold)
        if want != perm.attacking:
            return encode('ATTACK_TOGGLE', slot)
    return encode('PASS')


def _main_phase(state: GameState, params: HeuristicParams, legal) -> int:
    p = state.decision_player
    own, opp = state.players[p], state.players[1 - p]
    lands = _slots(legal, 'PLAY_LAND')
    if lands:
        return encode('PLAY_LAND', lands[0])

    casts = [('CAST_SORCERY', s) for s in _slots(legal, 'CAST_SORCERY')]
    casts += [('CAST_INSTANT', s) for s in _slots(legal, 'CAST_INSTANT')]
    opp_power = sum(max(0, c.power) for c in opp.creatures())
    own_power = sum(max(0, c.power) for c in own.creatures())

    def useful(card) -> bool:
        if any(e['op'] == 'pump' for e in card.effects):
            return False
        if any(e.get('target') == 'all_creatures' for e in card.effects):
            return opp_power > own_power
        if card.target_spec() != 'none':
            targets = valid_targets(state, p, card)
            opposing = any(PERMANENT_SLOTS <= t < 2 * PERMANENT_SLOTS for t in targets)
            face_ok = params.aggression == 'all' and TARGET_OPP_PLAYER in targets
            return opposing or face_ok
        return True

    options = [(cat, s, card_of(own.hand[s])) for cat, s in casts]
    options = [o for o in options if useful(o[2])]
    removal = [o for o in options if o[2].flags.is_removal]
    if removal and opp_power > 0:
        cat, s, _ = max(removal, key=lambda o: (o[2].cost.total, -o[1]))
        return encode(cat, s)
    if options:
        cat, s, _ = max(options, key=lambda o: (o[2].cost.total, -o[1]))
        return encode(cat, s)
    activations = _slots(legal, 'ACTIVATE')
    if activations:
        return encode('ACTIVATE', activations[0])
    return encode('PASS')


def _end_phase(state: GameState, legal) -> int:
    discards = _slots(legal, 'DISCARD')
    if not discards:
        return encode('PASS')
    hand = state.players[state.decision_player].hand
    land_slots = [i for i in discards if card_of(hand[i]).is_land]
    if len(land_slots) > 4:
        return encode('DISCARD', land_slots[-1])
    return encode('DISCARD', max(discards, key=lambda i: (card_of(hand[i]).cost.total, i)))


def heuristic_act(state: GameState, params: HeuristicParams, archetype: str = '') -> int:
    """Scripted decision for the deciding player; always a masked-in index."""
    legal = legal_decisions(state)
    top = state.top
    if top is not None:
        kind = top.kind
        if kind == 'mulligan':
            choice = _mulligan(state, params, legal)
        elif kind == 'bottom':
            choice = _bottom(state, legal)
        elif kind == 'target':
            choice = _choose_target(state, params, legal)
        elif kind == 'payment':
            choice = encode('AUTO_PAY') if ('AUTO_PAY', 0) in legal else encode('CANCEL')
        elif kind == 'response':
            choice = _response(state, legal)
        else:
            choice = _choose_blocker(state, legal)
    elif state.phase in ('main1', 'main2'):
        choice = _main_phase(state, params, legal)
    elif state.phase == 'combat_declare_attackers':
        choice = _attack(state, params, legal)
    elif state.phase == 'combat_declare_blockers':
        choice = _declare_blocks(state, params, legal)
    else:
        choice = _end_phase(state, legal)

    mask = mask_from_decisions(legal)
    if mask[choice]:
        return int(choice)
    return encode('PASS') if ('PASS', 0) in legal else int(np.flatnonzero(mask)[0])


def make_policy(selector: str, archetype: str = '') -> Policy:
    """Build a (state, rng) -> action policy from 'random' or 'heuristic[:archetype]'."""
    if selector == 'random':
        return lambda state, rng: random_act(mask_from_decisions(legal_decisions(state)), rng)
    if selector.startswith('heuristic'):
        name = selector.split(':', 1)[1] if ':' in selector else archetype
        params = params_for(name)
        return lambda state, rng: heuristic_act(state, params, name)
    raise ValueError(f"Unknown policy selector '{selector}'")
