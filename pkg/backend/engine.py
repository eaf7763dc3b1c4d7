"""Deterministic hidden-information game engine.

Covers London mulligans, the seven-phase turn, land drops, casting with
explicit target and mana-payment decisions, a counterspell response window,
single-blocker combat and terminal detection. All randomness flows from one
seeded PCG64 generator; shuffles are Fisher-Yates over `rng.integers`.

Zone order convention: index 0 of a library is its top card.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set, Tuple
import copy
import hashlib
import json
import logging

import numpy as np

from actions import (HAND_SLOTS, PERMANENT_SLOTS, TARGET_OPP_PLAYER, TARGET_OWN_PLAYER,
                     decode, encode)
from cards import CardDef, Deck, DeckError, DECK_SIZE, default_catalog

logger = logging.getLogger(__name__)

PHASES = ('beginning', 'main1', 'combat_declare_attackers', 'combat_declare_blockers',
          'combat_damage', 'main2', 'end')
PENDING_KINDS = ('none', 'mulligan', 'bottom', 'target', 'payment', 'response', 'block', 'discard')
OUTCOMES = ('win_p0', 'win_p1', 'draw')

STARTING_LIFE = 20
OPENING_HAND = 7
MAX_MULLIGANS = 3
MAX_HAND_AT_END = 7
DEFAULT_TURN_CAP = 30


class IllegalActionError(ValueError):
    """Raised when a masked-out action index is applied."""


class TerminalStateError(ValueError):
    """Raised when a decision is requested from a finished game."""


def card_of(card_id: str) -> CardDef:
    return default_catalog().get(card_id)


@dataclass
class Permanent:
    card: str
    ordinal: int
    controller: int
    tapped: bool = False
    summoning_sick: bool = False
    damage_marked: int = 0
    attacking: bool = False
    blocking: Optional[int] = None  # ordinal of the attacker being blocked
    is_token: bool = False
    power_bonus: int = 0
    toughness_bonus: int = 0
    loyalty: Optional[int] = None
    activated_this_turn: bool = False
    deathtouch_hit: bool = False

    @property
    def slot(self) -> int:
        return self.ordinal % PERMANENT_SLOTS

    @property
    def definition(self) -> CardDef:
        return card_of(self.card)

    @property
    def power(self) -> int:
        base = self.definition.power
        return 0 if base is None else base + self.power_bonus

    @property
    def toughness(self) -> int:
        base = self.definition.toughness
        return 0 if base is None else base + self.toughness_bonus

    def has_keyword(self, keyword: str) -> bool:
        return self.definition.has_keyword(keyword)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class PlayerState:
    life: int = STARTING_LIFE
    library: List[str] = field(default_factory=list)
    hand: List[str] = field(default_factory=list)
    battlefield: List[Permanent] = field(default_factory=list)
    graveyard: List[str] = field(default_factory=list)
    stack: List[str] = field(default_factory=list)  # spells cast but not yet resolved
    mulligans_taken: int = 0
    next_ordinal: int = 0
    archetype: str = ''
    drew_from_empty: bool = False

    def card_count(self) -> int:
        """Non-token card instances across all zones."""
        on_field = sum(1 for p in self.battlefield if not p.is_token)
        return len(self.library) + len(self.hand) + on_field + len(self.graveyard) + len(self.stack)

    def at_slot(self, slot: int) -> Optional[Permanent]:
        """Permanent addressed by a battlefield slot; the oldest wins a collision."""
        for perm in self.battlefield:
            if perm.slot == slot:
                return perm
        return None

    def by_ordinal(self, ordinal: int) -> Optional[Permanent]:
        for perm in self.battlefield:
            if perm.ordinal == ordinal:
                return perm
        return None

    def addressable(self) -> List[Permanent]:
        return [p for p in self.battlefield if self.at_slot(p.slot) is p]

    def creatures(self) -> List[Permanent]:
        return [p for p in self.battlefield if p.definition.is_creature]

    def to_dict(self) -> Dict[str, Any]:
        out = {k: v for k, v in self.__dict__.items() if k != 'battlefield'}
        out['battlefield'] = [p.to_dict() for p in self.battlefield]
        return out


@dataclass
class PendingDecision:
    kind: str
    player: int
    data: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StepEvents:
    """Per-player event counts produced by one step (index = credited player)."""

    damage_to_opponent: List[int] = field(default_factory=lambda: [0, 0])
    cards_drawn: List[int] = field(default_factory=lambda: [0, 0])
    creatures_entered: List[int] = field(default_factory=lambda: [0, 0])
    permanents_destroyed: List[int] = field(default_factory=lambda: [0, 0])
    life_gained: List[int] = field(default_factory=lambda: [0, 0])

    FIELDS = ('damage_to_opponent', 'cards_drawn', 'creatures_entered', 'permanents_destroyed', 'life_gained')

    def validate(self) -> 'StepEvents':
        for name in self.FIELDS:
            values = getattr(self, name)
            if len(values) != 2 or any(v < 0 for v in values):
                raise ValueError(f"StepEvents.{name} must be two non-negative counts, got {values}")
        return self

    def add(self, other: 'StepEvents') -> None:
        for name in self.FIELDS:
            mine, theirs = getattr(self, name), getattr(other, name)
            for i in range(2):
                mine[i] += theirs[i]

    def for_player(self, player: int) -> Dict[str, int]:
        return {name: getattr(self, name)[player] for name in self.FIELDS}

    def to_dict(self) -> Dict[str, List[int]]:
        return {name: list(getattr(self, name)) for name in self.FIELDS}


@dataclass
class GameState:
    players: List[PlayerState]
    rng: np.random.Generator
    turn_cap: int
    seed: int
    first_player: int = 0
    turn: int = 1
    phase: str = 'beginning'
    active_player: int = 0
    decision_player: int = 0
    pending: List[PendingDecision] = field(default_factory=list)
    land_played_this_turn: List[bool] = field(default_factory=lambda: [False, False])
    mana_spent: List[int] = field(default_factory=lambda: [0, 0])
    outcome: Optional[str] = None
    steps: int = 0
    events: StepEvents = field(default_factory=StepEvents)

    @property
    def top(self) -> Optional[PendingDecision]:
        return self.pending[-1] if self.pending else None

    @property
    def pending_kind(self) -> str:
        if self.pending:
            return self.top.kind
        if self.phase == 'end' and len(self.players[self.active_player].hand) > MAX_HAND_AT_END:
            return 'discard'
        return 'none'

    def clone(self) -> 'GameState':
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# setup

def episode_seed(seed: int, episode: int) -> int:
    """Per-episode game seed derived from (run seed, episode index)."""
    return int(np.random.SeedSequence([int(seed), int(episode)]).generate_state(1, dtype=np.uint64)[0])


def shuffle(cards: List[str], rng: np.random.Generator) -> None:
    """In-place Fisher-Yates from the last position down."""
    for i in range(len(cards) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        cards[i], cards[j] = cards[j], cards[i]


def _draw(state: GameState, player: int, n: int) -> None:
    ps = state.players[player]
    for _ in range(n):
        if not ps.library:
            ps.drew_from_empty = True
            return
        ps.hand.append(ps.library.pop(0))
        state.events.cards_drawn[player] += 1


def new_game(deck_a: Deck, deck_b: Deck, seed: int, turn_cap: int = DEFAULT_TURN_CAP,
             first_player: int = 0) -> GameState:
    """Fresh game with seven-card hands and player 0's mulligan decision pending.

    Player 0's library is shuffled before player 1's.
    """
    if turn_cap < 1:
        raise ValueError(f'turn_cap must be >= 1, got {turn_cap}')
    if first_player not in (0, 1):
        raise ValueError(f'first_player must be 0 or 1, got {first_player}')
    catalog = default_catalog()
    for deck in (deck_a, deck_b):
        if deck.total != DECK_SIZE:
            raise DeckError(f"Deck '{deck.archetype}' has {deck.total} cards, expected {DECK_SIZE}")
        for card_id, _ in deck.entries:
            if card_id not in catalog:
                raise DeckError(f"Deck '{deck.archetype}' references unknown card '{card_id}'")

    rng = np.random.Generator(np.random.PCG64(int(seed)))
    players = []
    for deck in (deck_a, deck_b):
        library = deck.card_list()
        shuffle(library, rng)
        players.append(PlayerState(library=library, archetype=deck.archetype))
    state = GameState(players=players, rng=rng, turn_cap=int(turn_cap), seed=int(seed),
                      first_player=first_player, active_player=first_player)
    for p in (0, 1):
        _draw(state, p, OPENING_HAND)
    state.pending.append(PendingDecision('mulligan', 0))
    state.events = StepEvents()
    _sync_decision_player(state)
    return state


def put_onto_battlefield(state: GameState, player: int, card_id: str, tapped: bool = False,
                         is_token: bool = False, summoning_sick: Optional[bool] = None) -> Permanent:
    """Create a permanent under `player`'s control with the next entry ordinal."""
    ps = state.players[player]
    card = card_of(card_id)
    sick = card.is_creature if summoning_sick is None else summoning_sick
    perm = Permanent(card=card_id, ordinal=ps.next_ordinal, controller=player, tapped=tapped,
                     summoning_sick=sick, is_token=is_token or card.is_token, loyalty=card.loyalty)
    ps.next_ordinal += 1
    ps.battlefield.append(perm)
    if card.is_creature:
        state.events.creatures_entered[player] += 1
    return perm


# ---------------------------------------------------------------------------
# mana

@dataclass(frozen=True)
class ManaSource:
    ordinal: int
    colors: Tuple[str, ...]
    generic_only: bool
    is_creature: bool


def mana_sources(state: GameState, player: int, convoke: bool = False) -> List[ManaSource]:
    """Untapped sources able to pay now, in preference order (cheap lands first)."""
    sources = []
    for perm in state.players[player].addressable():
        if perm.tapped:
            continue
        card = perm.definition
        can_tap = card.flags.mana_producer and (card.is_land or not perm.summoning_sick)
        if can_tap:
            sources.append(ManaSource(perm.ordinal, card.colors_produced, False, card.is_creature))
        elif convoke and card.is_creature:
            sources.append(ManaSource(perm.ordinal, (), True, True))
    sources.sort(key=lambda s: (s.generic_only, s.is_creature, len(s.colors), s.ordinal))
    return sources


def _assign_pips(pips: List[str], sources: List[ManaSource]) -> Optional[List[int]]:
    """Distinct sources covering each coloured pip, or None."""
    chosen: List[int] = []

    def rec(i: int, start: int) -> bool:
        if i == len(pips):
            return True
        lo = start if i > 0 and pips[i] == pips[i - 1] else 0
        for k in range(lo, len(sources)):
            src = sources[k]
            if src.generic_only or src.ordinal in chosen or pips[i] not in src.colors:
                continue
            chosen.append(src.ordinal)
            if rec(i + 1, k + 1):
                return True
            chosen.pop()
        return False

    for color in set(pips):
        if sum(1 for s in sources if color in s.colors) < pips.count(color):
            return None
    return list(chosen) if rec(0, 0) else None


def find_payment(card: CardDef, sources: List[ManaSource]) -> Optional[List[int]]:
    """Greedy colour-matching payment; returns the ordinals to tap."""
    if len(sources) < card.cost.total:
        return None
    coloured = _assign_pips(card.cost.pip_list(), sources)
    if coloured is None:
        return None
    rest = [s.ordinal for s in sources if s.ordinal not in coloured]
    return coloured + rest[:card.cost.generic]


def is_exact_payment(card: CardDef, selected: List[ManaSource]) -> bool:
    return len(selected) == card.cost.total and _assign_pips(card.cost.pip_list(), selected) is not None


def can_afford(state: GameState, player: int, card: CardDef) -> bool:
    convoke = card.has_static('cost_reduction_convoke')
    return find_payment(card, mana_sources(state, player, convoke)) is not None


# ---------------------------------------------------------------------------
# legality

def valid_targets(state: GameState, player: int, card: CardDef) -> List[int]:
    """TARGET slots the card may choose, from `player`'s side."""
    spec = card.target_spec()
    if spec == 'none':
        return []
    max_total = next((e.get('max_total') for e in card.effects if e.get('target') == spec), None)
    own, opp = state.players[player], state.players[1 - player]

    def creature_ok(perm: Permanent) -> bool:
        return perm.definition.is_creature and (max_total is None or perm.power + perm.toughness <= max_total)

    slots: List[int] = []
    if spec in ('any', 'creature', 'own_creature'):
        for perm in own.addressable():
            if creature_ok(perm) or (spec == 'any' and perm.definition.kind == 'planeswalker'):
                slots.append(perm.slot)
    if spec in ('any', 'creature', 'opp_creature'):
        for perm in opp.addressable():
            if creature_ok(perm) or (spec == 'any' and perm.definition.kind == 'planeswalker'):
                slots.append(PERMANENT_SLOTS + perm.slot)
    if spec == 'opp_nonland':
        slots.extend(PERMANENT_SLOTS + p.slot for p in opp.addressable() if not p.definition.is_land)
    if spec == 'any':
        slots.append(TARGET_OPP_PLAYER)
    return sorted(slots)


def _castable(state: GameState, player: int, card: CardDef) -> bool:
    if card.is_land or card.flags.is_counter:
        return False
    if card.target_spec() != 'none' and not valid_targets(state, player, card):
        return False
    return can_afford(state, player, card)


def _counter_slots(state: GameState, player: int) -> List[int]:
    hand = state.players[player].hand
    return [i for i, cid in enumerate(hand[:HAND_SLOTS])
            if card_of(cid).flags.is_counter and can_afford(state, player, card_of(cid))]


def can_attack(perm: Permanent) -> bool:
    return (perm.definition.is_creature and not perm.tapped
            and (not perm.summoning_sick or perm.has_keyword('haste')))


def can_block(blocker: Permanent, attacker: Permanent) -> bool:
    if not blocker.definition.is_creature or blocker.tapped or blocker.blocking is not None:
        return False
    return not attacker.has_keyword('flying') or blocker.has_keyword('flying')


def _blockable_attackers(state: GameState) -> List[Permanent]:
    attacker_side = state.players[state.active_player]
    defender = state.players[1 - state.active_player]
    blocked = {p.blocking for p in defender.battlefield if p.blocking is not None}
    out = []
    for atk in attacker_side.addressable():
        if atk.attacking and atk.ordinal not in blocked:
            if any(can_block(b, atk) for b in defender.addressable()):
                out.append(atk)
    return out


def _hand_casts(state: GameState, player: int, sorcery_timing: bool) -> Set[Tuple[str, int]]:
    out: Set[Tuple[str, int]] = set()
    for i, cid in enumerate(state.players[player].hand[:HAND_SLOTS]):
        card = card_of(cid)
        if not _castable(state, player, card):
            continue
        if card.instant_speed:
            out.add(('CAST_INSTANT', i))
        elif sorcery_timing:
            out.add(('CAST_SORCERY', i))
    return out


def legal_decisions(state: GameState) -> Set[Tuple[str, int]]:
    """Every (category, slot) the deciding player may choose now."""
    if state.outcome is not None:
        raise TerminalStateError('Game is over; no decisions are legal')
    p = state.decision_player
    ps = state.players[p]
    legal: Set[Tuple[str, int]] = set()
    top = state.top

    if top is not None:
        if top.kind == 'mulligan':
            legal.add(('KEEP', 0))
            if ps.mulligans_taken < MAX_MULLIGANS:
                legal.add(('MULLIGAN', 0))
        elif top.kind == 'bottom':
            legal.update(('BOTTOM', i) for i in range(min(len(ps.hand), HAND_SLOTS)))
        elif top.kind == 'target':
            card = card_of(top.data['spell']['card'])
            legal.update(('TARGET', t) for t in valid_targets(state, p, card))
            legal.add(('CANCEL', 0))
        elif top.kind == 'payment':
            card = card_of(top.data['spell']['card'])
            sources = mana_sources(state, p, card.has_static('cost_reduction_convoke'))
            if find_payment(card, sources) is not None:
                legal.add(('AUTO_PAY', 0))
            legal.update(('MANA_SOURCE', ps.by_ordinal(s.ordinal).slot) for s in sources)
            chosen = [s for s in sources if s.ordinal in top.data['selected']]
            if is_exact_payment(card, chosen):
                legal.add(('CONFIRM', 0))
            legal.add(('CANCEL', 0))
        elif top.kind == 'response':
            legal.add(('PASS', 0))
            legal.update(('CAST_INSTANT', i) for i in _counter_slots(state, p))
        elif top.kind == 'block':
            attacker = state.players[1 - p].by_ordinal(top.data['attacker'])
            legal.update(('BLOCK_SELECT_BLOCKER', b.slot) for b in ps.addressable()
                         if attacker is not None and can_block(b, attacker))
            legal.add(('CANCEL', 0))
        return legal

    phase = state.phase
    if phase in ('main1', 'main2'):
        legal.add(('PASS', 0))
        if not state.land_played_this_turn[p]:
            legal.update(('PLAY_LAND', i) for i, cid in enumerate(ps.hand[:HAND_SLOTS]) if card_of(cid).is_land)
        legal.update(_hand_casts(state, p, sorcery_timing=True))
        legal.update(('ACTIVATE', perm.slot) for perm in ps.addressable()
                     if perm.definition.activated and not perm.activated_this_turn)
    elif phase == 'combat_declare_attackers':
        legal.add(('PASS', 0))
        legal.update(('ATTACK_TOGGLE', perm.slot) for perm in ps.addressable() if can_attack(perm))
    elif phase == 'combat_declare_blockers':
        legal.add(('PASS', 0))
        legal.update(('BLOCK_SELECT_ATTACKER', a.slot) for a in _blockable_attackers(state))
        legal.update(_hand_casts(state, p, sorcery_timing=False))
    elif phase == 'end':
        if len(ps.hand) > MAX_HAND_AT_END:
            legal.update(('DISCARD', i) for i in range(min(len(ps.hand), HAND_SLOTS)))
        else:
            legal.add(('PASS', 0))
    return legal


# ---------------------------------------------------------------------------
# transitions

def _sync_decision_player(state: GameState) -> None:
    if state.pending:
        state.decision_player = state.top.player
    elif state.phase == 'combat_declare_blockers':
        state.decision_player = 1 - state.active_player
    else:
        state.decision_player = state.active_player


def _gain_life(state: GameState, player: int, amount: int) -> None:
    if amount > 0:
        state.players[player].life += amount
        state.events.life_gained[player] += amount


def _damage_player(state: GameState, source_player: int, amount: int) -> None:
    if amount > 0:
        state.players[1 - source_player].life -= amount
        state.events.damage_to_opponent[source_player] += amount


def _damage_permanent(perm: Permanent, amount: int, deathtouch: bool = False) -> None:
    if amount <= 0:
        return
    if perm.definition.is_creature:
        perm.damage_marked += amount
        perm.deathtouch_hit = perm.deathtouch_hit or deathtouch
    elif perm.loyalty is not None:
        perm.loyalty -= amount


def _destroy(state: GameState, perm: Permanent) -> None:
    ps = state.players[perm.controller]
    if perm not in ps.battlefield:
        return
    ps.battlefield.remove(perm)
    if not perm.is_token:
        ps.graveyard.append(perm.card)
    state.events.permanents_destroyed[perm.controller] += 1


def _state_based_checks(state: GameState) -> None:
    for ps in state.players:
        for perm in list(ps.battlefield):
            card = perm.definition
            if card.is_creature:
                lethal = perm.damage_marked >= perm.toughness or (perm.deathtouch_hit and perm.damage_marked > 0)
                if lethal or perm.toughness <= 0:
                    _destroy(state, perm)
            elif card.kind == 'planeswalker' and perm.loyalty is not None and perm.loyalty <= 0:
                _destroy(state, perm)
    lost = [ps.life <= 0 or ps.drew_from_empty for ps in state.players]
    if lost[0] and lost[1]:
        state.outcome = 'draw'
    elif lost[0]:
        state.outcome = 'win_p1'
    elif lost[1]:
        state.outcome = 'win_p0'


def resolve_combat(state: GameState) -> GameState:
    """Exchange combat damage in place: blocked pairs simultaneously, the rest to face."""
    a = state.active_player
    attacker_side, defender = state.players[a], state.players[1 - a]
    for atk in sorted((p for p in attacker_side.battlefield if p.attacking), key=lambda p: p.ordinal):
        blocker = next((b for b in defender.battlefield if b.blocking == atk.ordinal), None)
        atk_power = max(0, atk.power)
        if blocker is None:
            _damage_player(state, a, atk_power)
            if atk.has_keyword('lifelink'):
                _gain_life(state, a, atk_power)
            continue
        blk_power = max(0, blocker.power)
        _damage_permanent(blocker, atk_power, atk.has_keyword('deathtouch'))
        _damage_permanent(atk, blk_power, blocker.has_keyword('deathtouch'))
        if atk.has_keyword('lifelink'):
            _gain_life(state, a, atk_power)
        if blocker.has_keyword('lifelink'):
            _gain_life(state, 1 - a, blk_power)
    for ps in state.players:
        for perm in ps.battlefield:
            perm.attacking = False
            perm.blocking = None
    _state_based_checks(state)
    return state


def _resolve_target(state: GameState, player: int, slot: int) -> Dict[str, int]:
    if slot == TARGET_OWN_PLAYER:
        return {'player': player}
    if slot == TARGET_OPP_PLAYER:
        return {'player': 1 - player}
    side = player if slot < PERMANENT_SLOTS else 1 - player
    perm = state.players[side].at_slot(slot % PERMANENT_SLOTS)
    return {'controller': side, 'ordinal': perm.ordinal}


def _apply_effect(state: GameState, player: int, effect: Dict[str, Any], target: Optional[Dict[str, int]]) -> None:
    op = effect['op']
    perm = None
    if target is not None and 'ordinal' in target:
        perm = state.players[target['controller']].by_ordinal(target['ordinal'])

    if op == 'deal_damage':
        if target is not None and 'player' in target:
            if target['player'] != player:
                _damage_player(state, player, effect['amount'])
        elif perm is not None:
            _damage_permanent(perm, effect['amount'])
    elif op == 'destroy':
        if effect.get('target') == 'all_creatures':
            for ps in state.players:
                for victim in [p for p in ps.battlefield if p.definition.is_creature]:
                    _destroy(state, victim)
        elif perm is not None:
            _destroy(state, perm)
    elif op == 'draw':
        _draw(state, player, effect['amount'])
    elif op == 'gain_life':
        _gain_life(state, player, effect['amount'])
    elif op == 'create_token':
        for _ in range(effect.get('amount', 1)):
            put_onto_battlefield(state, player, effect['token'], is_token=True)
    elif op == 'add_mana':
        for _ in range(effect.get('amount', 1)):
            put_onto_battlefield(state, player, effect['token'], tapped=True, is_token=True)
    elif op == 'pump':
        if perm is not None:
            perm.power_bonus += effect.get('power', 0)
            perm.toughness_bonus += effect.get('toughness', 0)
    # counter is handled by the response window; static markers never resolve


def _resolve_spell(state: GameState, spell: Dict[str, Any]) -> None:
    player = spell['controller']
    ps = state.players[player]
    card = card_of(spell['card'])
    ps.stack.remove(card.id)
    if card.is_permanent:
        put_onto_battlefield(state, player, card.id)
    for effect in card.effects:
        _apply_effect(state, player, effect, spell.get('target'))
    if not card.is_permanent:
        ps.graveyard.append(card.id)
    _state_based_checks(state)


def _return_to_hand(state: GameState, spell: Dict[str, Any]) -> None:
    ps = state.players[spell['controller']]
    ps.stack.remove(spell['card'])
    ps.hand.insert(min(spell['hand_index'], len(ps.hand)), spell['card'])


def _begin_cast(state: GameState, player: int, hand_index: int, counter_of: Optional[Dict[str, Any]] = None) -> None:
    ps = state.players[player]
    card_id = ps.hand.pop(hand_index)
    ps.stack.append(card_id)
    spell = {'card': card_id, 'controller': player, 'hand_index': hand_index, 'target': None}
    if counter_of is None and card_of(card_id).target_spec() != 'none':
        state.pending.append(PendingDecision('target', player, {'spell': spell}))
    else:
        state.pending.append(PendingDecision('payment', player,
                                             {'spell': spell, 'selected': [], 'counter_of': counter_of}))


def _finish_payment(state: GameState, ctx: PendingDecision, ordinals: List[int]) -> None:
    player = ctx.player
    ps = state.players[player]
    spell = ctx.data['spell']
    card = card_of(spell['card'])
    for ordinal in ordinals:
        ps.by_ordinal(ordinal).tapped = True
    state.mana_spent[player] += card.cost.total
    state.pending.pop()
    if not card.is_creature:
        for perm in ps.battlefield:
            if perm.definition.has_static('static_prowess_trigger'):
                perm.power_bonus += 1
                perm.toughness_bonus += 1

    countered = ctx.data.get('counter_of')
    if countered is not None:
        owner = state.players[countered['controller']]
        owner.stack.remove(countered['card'])
        owner.graveyard.append(countered['card'])
        ps.stack.remove(card.id)
        ps.graveyard.append(card.id)
        if state.top is not None and state.top.kind == 'response':
            state.pending.pop()
        logger.debug('spell countered card=%s by=%s', countered['card'], card.id)
        return
    if _counter_slots(state, 1 - player):
        state.pending.append(PendingDecision('response', 1 - player, {'spell': spell}))
    else:
        _resolve_spell(state, spell)


def _after_keep(state: GameState, player: int) -> None:
    if player == 0:
        state.pending.append(PendingDecision('mulligan', 1))


def _begin_turn(state: GameState) -> None:
    a = state.active_player
    for perm in state.players[a].battlefield:
        perm.tapped = False
        perm.summoning_sick = False
        perm.activated_this_turn = False
    state.land_played_this_turn = [False, False]
    state.mana_spent = [0, 0]
    if not (state.turn == 1 and a == state.first_player):
        _draw(state, a, 1)


def _end_turn(state: GameState) -> None:
    for ps in state.players:
        for perm in ps.battlefield:
            perm.damage_marked = 0
            perm.power_bonus = 0
            perm.toughness_bonus = 0
            perm.deathtouch_hit = False
            perm.attacking = False
            perm.blocking = None
    state.turn += 1
    if state.turn > state.turn_cap:
        state.outcome = 'draw'
        return
    state.active_player = 1 - state.active_player
    state.phase = 'beginning'


def _defender_has_options(state: GameState) -> bool:
    d = 1 - state.active_player
    return bool(_blockable_attackers(state)) or bool(_hand_casts(state, d, sorcery_timing=False))


def _advance(state: GameState) -> None:
    """Run automatic phases until a decision is needed or the game ends."""
    while state.outcome is None:
        _state_based_checks(state)
        if state.outcome is not None or state.pending:
            break
        phase = state.phase
        if phase == 'beginning':
            _begin_turn(state)
            state.phase = 'main1'
        elif phase == 'combat_declare_attackers':
            if any(can_attack(p) for p in state.players[state.active_player].addressable()):
                break
            state.phase = 'main2'
        elif phase == 'combat_declare_blockers':
            if not any(p.attacking for p in state.players[state.active_player].battlefield):
                state.phase = 'main2'
            elif _defender_has_options(state):
                break
            else:
                state.phase = 'combat_damage'
        elif phase == 'combat_damage':
            resolve_combat(state)
            state.phase = 'main2'
        else:
            break
    _sync_decision_player(state)


def _apply(state: GameState, category: str, slot: int) -> None:
    p = state.decision_player
    ps = state.players[p]
    top = state.top

    if top is not None:
        if top.kind == 'mulligan':
            if category == 'KEEP':
                state.pending.pop()
                if ps.mulligans_taken > 0:
                    state.pending.append(PendingDecision('bottom', p, {'remaining': ps.mulligans_taken}))
                else:
                    _after_keep(state, p)
            else:
                ps.library.extend(ps.hand)
                ps.hand = []
                shuffle(ps.library, state.rng)
                ps.mulligans_taken += 1
                _draw(state, p, OPENING_HAND)
        elif top.kind == 'bottom':
            ps.library.append(ps.hand.pop(slot))
            top.data['remaining'] -= 1
            if top.data['remaining'] == 0:
                state.pending.pop()
                _after_keep(state, p)
        elif top.kind == 'target':
            spell = top.data['spell']
            state.pending.pop()
            if category == 'CANCEL':
                _return_to_hand(state, spell)
            else:
                spell['target'] = _resolve_target(state, p, slot)
                state.pending.append(PendingDecision('payment', p,
                                                     {'spell': spell, 'selected': [], 'counter_of': None}))
        elif top.kind == 'payment':
            card = card_of(top.data['spell']['card'])
            convoke = card.has_static('cost_reduction_convoke')
            if category == 'CANCEL':
                state.pending.pop()
                _return_to_hand(state, top.data['spell'])
            elif category == 'MANA_SOURCE':
                ordinal = ps.at_slot(slot).ordinal
                selected = top.data['selected']
                if ordinal in selected:
                    selected.remove(ordinal)
                else:
                    selected.append(ordinal)
            elif category == 'AUTO_PAY':
                _finish_payment(state, top, find_payment(card, mana_sources(state, p, convoke)))
            else:
                _finish_payment(state, top, list(top.data['selected']))
        elif top.kind == 'response':
            if category == 'PASS':
                state.pending.pop()
                _resolve_spell(state, top.data['spell'])
            else:
                _begin_cast(state, p, slot, counter_of=top.data['spell'])
        elif top.kind == 'block':
            state.pending.pop()
            if category == 'BLOCK_SELECT_BLOCKER':
                ps.at_slot(slot).blocking = top.data['attacker']
        return

    if category == 'PASS':
        if state.phase == 'main1':
            state.phase = 'combat_declare_attackers'
        elif state.phase == 'combat_declare_attackers':
            attackers = [perm for perm in ps.battlefield if perm.attacking]
            for perm in attackers:
                if not perm.has_keyword('vigilance'):
                    perm.tapped = True
            state.phase = 'combat_declare_blockers' if attackers else 'main2'
        elif state.phase == 'combat_declare_blockers':
            state.phase = 'combat_damage'
        elif state.phase == 'main2':
            state.phase = 'end'
        elif state.phase == 'end':
            _end_turn(state)
    elif category == 'PLAY_LAND':
        put_onto_battlefield(state, p, ps.hand.pop(slot))
        state.land_played_this_turn[p] = True
    elif category in ('CAST_SORCERY', 'CAST_INSTANT'):
        _begin_cast(state, p, slot)
    elif category == 'ACTIVATE':
        perm = ps.at_slot(slot)
        for effect in perm.definition.activated:
            _apply_effect(state, p, effect, None)
        perm.activated_this_turn = True
        if perm.loyalty is not None:
            perm.loyalty -= 1
    elif category == 'ATTACK_TOGGLE':
        perm = ps.at_slot(slot)
        perm.attacking = not perm.attacking
    elif category == 'BLOCK_SELECT_ATTACKER':
        attacker = state.players[1 - p].at_slot(slot)
        state.pending.append(PendingDecision('block', p, {'attacker': attacker.ordinal}))
    elif category == 'DISCARD':
        ps.graveyard.append(ps.hand.pop(slot))


def step(state: GameState, action: int, inplace: bool = False) -> Tuple[GameState, StepEvents, Optional[str]]:
    """Apply one masked-in action; returns (state, events, outcome-or-None)."""
    if state.outcome is not None:
        raise TerminalStateError('Cannot step a finished game')
    category, slot = decode(int(action))
    if (category, slot) not in legal_decisions(state):
        raise IllegalActionError(
            f'Action {action} ({category}, {slot}) is not legal for player {state.decision_player} '
            f'in phase {state.phase} with pending {state.pending_kind}')
    if not inplace:
        state = state.clone()
    state.events = StepEvents()
    _apply(state, category, slot)
    _advance(state)
    state.steps += 1
    events = state.events.validate()
    return state, events, state.outcome


def is_terminal(state: GameState) -> Optional[str]:
    """Outcome of a finished game, or None while play continues."""
    if state.outcome is not None:
        return state.outcome
    lost = [ps.life <= 0 or ps.drew_from_empty for ps in state.players]
    if lost[0] and lost[1]:
        return 'draw'
    if lost[0]:
        return 'win_p1'
    if lost[1]:
        return 'win_p0'
    if state.turn > state.turn_cap:
        return 'draw'
    return None


def winner(outcome: Optional[str]) -> Optional[int]:
    if outcome == 'win_p0':
        return 0
    if outcome == 'win_p1':
        return 1
    return None


# ---------------------------------------------------------------------------
# hashing and traces

def state_to_dict(state: GameState) -> Dict[str, Any]:
    return {
        'players': [ps.to_dict() for ps in state.players],
        'turn': state.turn,
        'phase': state.phase,
        'active_player': state.active_player,
        'decision_player': state.decision_player,
        'pending': [{'kind': c.kind, 'player': c.player, 'data': c.data} for c in state.pending],
        'land_played_this_turn': list(state.land_played_this_turn),
        'mana_spent': list(state.mana_spent),
        'turn_cap': state.turn_cap,
        'first_player': state.first_player,
        'outcome': state.outcome,
        'rng': state.rng.bit_generator.state,
    }


def state_hash(state: GameState) -> str:
    """SHA-256 over the canonical JSON form of the full state."""
    blob = json.dumps(state_to_dict(state), sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()


def trace_record(state_before: GameState, action: int, events: StepEvents, state_after: GameState) -> Dict[str, Any]:
    return {
        'turn': state_before.turn,
        'phase': state_before.phase,
        'decision_player': state_before.decision_player,
        'action': int(action),
        'events': events.to_dict(),
        'state_hash': state_hash(state_after),
    }


def export_trace(records: List[Dict[str, Any]], path: str) -> str:
    """Write trace records as JSON lines."""
    with open(path, 'w', encoding='utf-8') as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + '\n')
    return path


def trace_digest(records: List[Dict[str, Any]]) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(rec['state_hash'].encode('ascii'))
    return h.hexdigest()
