"""Card catalog and the five fixed archetype deck lists.

The catalog ships as a schema-versioned JSON file (data/catalog.json) with
simplified stats, effect primitives and a fidelity note per card. Deck lists
live in data/decks.json and mirror the tournament lists exactly.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple, Union
import json
import logging
import os

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
CATALOG_PATH = os.path.join(DATA_DIR, 'catalog.json')
DECKS_PATH = os.path.join(DATA_DIR, 'decks.json')

SCHEMA_VERSION = 1
POOL_SIZE = 56
DECK_SIZE = 60

KINDS = ('land', 'creature', 'instant', 'sorcery', 'enchantment', 'planeswalker')
PERMANENT_KINDS = ('land', 'creature', 'enchantment', 'planeswalker')
COLORS = ('W', 'U', 'B', 'R', 'G')
KEYWORDS = ('haste', 'flying', 'flash', 'deathtouch', 'lifelink', 'vigilance')
ARCHETYPES = ('mono_red_aggro', 'azorius_control', 'dimir_midrange', 'domain_ramp', 'boros_convoke')

EFFECT_OPS = frozenset({
    'deal_damage', 'destroy', 'counter', 'draw', 'gain_life', 'create_token',
    'pump', 'add_mana', 'cost_reduction_convoke', 'static_prowess_trigger',
})
STATIC_OPS = frozenset({'cost_reduction_convoke', 'static_prowess_trigger'})
TARGET_SPECS = ('any', 'creature', 'opp_creature', 'own_creature', 'opp_nonland', 'all_creatures', 'none')


class CatalogError(ValueError):
    """Raised when the catalog document is malformed."""


class DeckError(ValueError):
    """Raised for unknown archetypes or deck lists that do not validate."""


@dataclass(frozen=True)
class Cost:
    generic: int = 0
    pips: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.generic + sum(self.pips.values())

    def pip_list(self) -> List[str]:
        """Coloured pips expanded in WUBRG order."""
        out: List[str] = []
        for color in COLORS:
            out.extend([color] * self.pips.get(color, 0))
        return out


@dataclass(frozen=True)
class CardFlags:
    is_threat: bool = False
    is_removal: bool = False
    mana_producer: bool = False
    is_counter: bool = False


@dataclass(frozen=True)
class CardDef:
    id: str
    name: str
    kind: str
    cost: Cost
    power: Optional[int]
    toughness: Optional[int]
    effects: Tuple[Dict[str, Any], ...]
    flags: CardFlags
    colors_produced: Tuple[str, ...] = ()
    keywords: FrozenSet[str] = frozenset()
    loyalty: Optional[int] = None
    activated: Tuple[Dict[str, Any], ...] = ()
    fidelity: str = ''
    index: int = -1  # position in the 56-card pool; -1 for tokens
    is_token: bool = False

    @property
    def is_land(self) -> bool:
        return self.kind == 'land'

    @property
    def is_creature(self) -> bool:
        return self.kind == 'creature'

    @property
    def is_permanent(self) -> bool:
        return self.kind in PERMANENT_KINDS

    @property
    def instant_speed(self) -> bool:
        return self.kind == 'instant' or 'flash' in self.keywords

    @property
    def colors(self) -> Tuple[str, ...]:
        """Colour identity: pip colours for spells, produced colours for lands."""
        if self.is_land:
            return self.colors_produced
        return tuple(c for c in COLORS if self.cost.pips.get(c, 0) > 0)

    def has_keyword(self, keyword: str) -> bool:
        return keyword in self.keywords

    def has_static(self, op: str) -> bool:
        return any(e['op'] == op for e in self.effects)

    def target_spec(self) -> str:
        """Target requirement of the first targeted effect, or 'none'."""
        for effect in self.effects:
            target = effect.get('target')
            if target and target not in ('all_creatures', 'none'):
                return target
        return 'none'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'name': self.name,
            'kind': self.kind,
            'cost': {'generic': self.cost.generic, 'pips': dict(self.cost.pips)},
            'power': self.power,
            'toughness': self.toughness,
            'loyalty': self.loyalty,
            'keywords': sorted(self.keywords),
            'colors_produced': list(self.colors_produced),
            'effects': [dict(e) for e in self.effects],
            'activated': [dict(e) for e in self.activated],
            'flags': {
                'is_threat': self.flags.is_threat,
                'is_removal': self.flags.is_removal,
                'mana_producer': self.flags.mana_producer,
                'is_counter': self.flags.is_counter,
            },
            'fidelity': self.fidelity,
            'index': self.index,
        }


class Catalog:
    """Immutable lookup over pool cards and token definitions."""

    def __init__(self, cards: List[CardDef], tokens: List[CardDef]):
        self._cards: Dict[str, CardDef] = {c.id: c for c in cards}
        self._tokens: Dict[str, CardDef] = {t.id: t for t in tokens}
        self.pool_ids: Tuple[str, ...] = tuple(c.id for c in cards)

    def __len__(self) -> int:
        return len(self._cards)

    def __iter__(self) -> Iterator[CardDef]:
        return iter(self._cards.values())

    def __contains__(self, card_id: str) -> bool:
        return card_id in self._cards

    def get(self, card_id: str) -> CardDef:
        card = self._cards.get(card_id) or self._tokens.get(card_id)
        if card is None:
            raise CatalogError(f"Unknown card id '{card_id}'")
        return card

    def token(self, token_id: str) -> CardDef:
        if token_id not in self._tokens:
            raise CatalogError(f"Unknown token id '{token_id}'")
        return self._tokens[token_id]

    @property
    def tokens(self) -> List[CardDef]:
        return list(self._tokens.values())


@dataclass(frozen=True)
class Deck:
    archetype: str
    name: str
    entries: Tuple[Tuple[str, int], ...]

    @property
    def total(self) -> int:
        return sum(count for _, count in self.entries)

    def card_list(self) -> List[str]:
        """Expanded card ids in entry order (the pre-shuffle library)."""
        cards: List[str] = []
        for card_id, count in self.entries:
            cards.extend([card_id] * count)
        return cards


def _parse_card(entry: Dict[str, Any], index: int, is_token: bool) -> CardDef:
    card_id = entry.get('id')
    if not card_id:
        raise CatalogError('Catalog entry without id')
    kind = entry.get('kind')
    if kind not in KINDS:
        raise CatalogError(f"Card '{card_id}' has unknown kind '{kind}'")

    raw_cost = entry.get('cost', {}) or {}
    pips = {c: int(n) for c, n in (raw_cost.get('pips') or {}).items() if int(n) > 0}
    if any(c not in COLORS for c in pips):
        raise CatalogError(f"Card '{card_id}' has an unknown mana colour")
    cost = Cost(generic=int(raw_cost.get('generic', 0)), pips=pips)
    if kind == 'land' and cost.total != 0:
        raise CatalogError(f"Land '{card_id}' must have zero cost")

    power, toughness = entry.get('power'), entry.get('toughness')
    if kind == 'creature':
        if power is None or toughness is None:
            raise CatalogError(f"Creature '{card_id}' is missing power or toughness")
    elif power is not None or toughness is not None:
        raise CatalogError(f"Non-creature '{card_id}' must not carry power/toughness")

    effects = tuple(dict(e) for e in entry.get('effects', []) or [])
    activated = tuple(dict(e) for e in entry.get('activated', []) or [])
    for effect in effects + activated:
        if effect.get('op') not in EFFECT_OPS:
            raise CatalogError(f"Card '{card_id}' uses unknown effect '{effect.get('op')}'")
        target = effect.get('target')
        if target is not None and target not in TARGET_SPECS:
            raise CatalogError(f"Card '{card_id}' uses unknown target spec '{target}'")

    keywords = frozenset(entry.get('keywords', []) or [])
    unknown = keywords.difference(KEYWORDS)
    if unknown:
        raise CatalogError(f"Card '{card_id}' has unknown keywords {sorted(unknown)}")

    raw_flags = entry.get('flags', {}) or {}
    flags = CardFlags(
        is_threat=bool(raw_flags.get('is_threat', kind in ('creature', 'planeswalker'))),
        is_removal=bool(raw_flags.get('is_removal', False)),
        mana_producer=bool(raw_flags.get('mana_producer', False)),
        is_counter=bool(raw_flags.get('is_counter', False)),
    )
    return CardDef(
        id=card_id,
        name=entry.get('name', card_id),
        kind=kind,
        cost=cost,
        power=None if power is None else int(power),
        toughness=None if toughness is None else int(toughness),
        effects=effects,
        flags=flags,
        colors_produced=tuple(entry.get('colors_produced', []) or []),
        keywords=keywords,
        loyalty=entry.get('loyalty'),
        activated=activated,
        fidelity=entry.get('fidelity', ''),
        index=-1 if is_token else index,
        is_token=is_token,
    )


def _read_document(document: Union[str, Dict[str, Any], None], default_path: str) -> Dict[str, Any]:
    if document is None:
        document = default_path
    if isinstance(document, dict):
        return document
    with open(document, 'r', encoding='utf-8') as fh:
        return json.load(fh)


def load_catalog(document: Union[str, Dict[str, Any], None] = None) -> Catalog:
    """Parse and validate a catalog document (path or already-parsed dict)."""
    doc = _read_document(document, CATALOG_PATH)
    if doc.get('schema_version') != SCHEMA_VERSION:
        raise CatalogError(f"Unsupported catalog schema_version {doc.get('schema_version')}")

    seen = set()
    cards: List[CardDef] = []
    for i, entry in enumerate(doc.get('cards', [])):
        card = _parse_card(entry, i, is_token=False)
        if card.id in seen:
            raise CatalogError(f"Duplicate card id '{card.id}'")
        seen.add(card.id)
        cards.append(card)
    tokens: List[CardDef] = []
    for entry in doc.get('tokens', []):
        token = _parse_card(entry, -1, is_token=True)
        if token.id in seen:
            raise CatalogError(f"Duplicate card id '{token.id}'")
        seen.add(token.id)
        tokens.append(token)

    catalog = Catalog(cards, tokens)
    for card in list(cards) + tokens:
        for effect in card.effects + card.activated:
            if 'token' in effect:
                catalog.token(effect['token'])
    logger.debug('catalog loaded cards=%d tokens=%d', len(cards), len(tokens))
    return catalog


@lru_cache(maxsize=1)
def default_catalog() -> Catalog:
    """The bundled catalog, parsed once per process."""
    return load_catalog(CATALOG_PATH)


@lru_cache(maxsize=1)
def _default_deck_lists() -> Dict[str, Any]:
    return _read_document(None, DECKS_PATH)


def load_deck_lists(document: Union[str, Dict[str, Any], None] = None) -> Dict[str, Any]:
    if document is None:
        return _default_deck_lists()
    return _read_document(document, DECKS_PATH)


def deck_for(archetype: str, catalog: Optional[Catalog] = None,
             deck_lists: Union[str, Dict[str, Any], None] = None) -> Deck:
    """Return the fixed list for an archetype, validated against the catalog."""
    if archetype not in ARCHETYPES:
        raise DeckError(f"Unknown archetype '{archetype}'. Expected one of {list(ARCHETYPES)}")
    catalog = catalog or default_catalog()
    doc = load_deck_lists(deck_lists)
    raw = doc.get('decks', {}).get(archetype)
    if raw is None:
        raise DeckError(f"Deck list for '{archetype}' missing from document")

    entries = tuple((str(card_id), int(count)) for card_id, count in raw['entries'])
    for card_id, count in entries:
        if count < 1:
            raise DeckError(f"Deck '{archetype}' has non-positive count for '{card_id}'")
        if card_id not in catalog:
            raise DeckError(f"Deck '{archetype}' references unknown card '{card_id}'")
    deck = Deck(archetype=archetype, name=raw.get('name', archetype), entries=entries)
    if deck.total != DECK_SIZE:
        raise DeckError(f"Deck '{archetype}' has {deck.total} cards, expected {DECK_SIZE}")
    return deck


def all_decks(catalog: Optional[Catalog] = None) -> Dict[str, Deck]:
    return {a: deck_for(a, catalog) for a in ARCHETYPES}


def classify(card: CardDef) -> CardFlags:
    return card.flags


def export_catalog(catalog: Optional[Catalog] = None) -> Dict[str, Any]:
    catalog = catalog or default_catalog()
    return {
        'schema_version': SCHEMA_VERSION,
        'cards': [c.to_dict() for c in catalog],
        'tokens': [t.to_dict() for t in catalog.tokens],
    }


def export_deck(deck: Deck) -> Dict[str, Any]:
    return {
        'archetype': deck.archetype,
        'name': deck.name,
        'total': deck.total,
        'entries': [{'card': card_id, 'count': count} for card_id, count in deck.entries],
    }
