"""Fixed 478-slot action layout and the legality mask.

Hand-indexed categories address stable hand positions 0-9. Battlefield-indexed
categories address a per-player permanent ordinal (entry order) modulo 60.
TARGET slots are [0-59 own permanents, 60-119 opponent permanents,
120 own player, 121 opponent player] from the deciding player's side.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np


class LayoutError(ValueError):
    """Raised for out-of-range categories, slots or indices."""


@dataclass(frozen=True)
class Category:
    name: str
    base: int
    count: int
    semantics: str


LAYOUT: Tuple[Category, ...] = (
    Category('PASS', 0, 1, 'advance phase, decline a response, finish a declaration'),
    Category('KEEP', 1, 1, 'keep the current opening hand'),
    Category('MULLIGAN', 2, 1, 'London mulligan: shuffle hand back and redraw seven'),
    Category('CONFIRM', 3, 1, 'pay with the selected mana sources'),
    Category('CANCEL', 4, 1, 'abandon the pending target, payment or block selection'),
    Category('AUTO_PAY', 5, 1, 'pay the pending cost with the greedy colour matcher'),
    Category('BOTTOM', 6, 10, 'hand position put on the library bottom after a mulligan'),
    Category('DISCARD', 16, 10, 'hand position discarded at end of turn above seven cards'),
    Category('PLAY_LAND', 26, 10, 'hand position of a land to play'),
    Category('CAST_SORCERY', 36, 10, 'hand position of a sorcery-speed spell'),
    Category('CAST_INSTANT', 46, 10, 'hand position of an instant or flash spell'),
    Category('ACTIVATE', 56, 60, 'own permanent slot whose ability to activate'),
    Category('ATTACK_TOGGLE', 116, 60, 'own creature slot toggled as attacker'),
    Category('BLOCK_SELECT_ATTACKER', 176, 60, 'opponent attacker slot to block'),
    Category('BLOCK_SELECT_BLOCKER', 236, 60, 'own creature slot assigned to the selected attacker'),
    Category('TARGET', 296, 122, '0-59 own permanents, 60-119 opponent permanents, 120 own player, 121 opponent player'),
    Category('MANA_SOURCE', 418, 60, 'own permanent slot toggled as a mana source'),
)

ACTION_DIM = 478
HAND_SLOTS = 10
PERMANENT_SLOTS = 60
TARGET_OWN_PLAYER = 120
TARGET_OPP_PLAYER = 121

_BY_NAME: Dict[str, Category] = {c.name: c for c in LAYOUT}
CATEGORY_NAMES: Tuple[str, ...] = tuple(c.name for c in LAYOUT)

# index -> (category, slot) table, built once
_DECODE: List[Tuple[str, int]] = []
for _cat in LAYOUT:
    _DECODE.extend((_cat.name, s) for s in range(_cat.count))
assert len(_DECODE) == ACTION_DIM


def category(name: str) -> Category:
    if name not in _BY_NAME:
        raise LayoutError(f"Unknown action category '{name}'")
    return _BY_NAME[name]


def encode(category_name: str, slot: int = 0) -> int:
    cat = category(category_name)
    if not 0 <= slot < cat.count:
        raise LayoutError(f"Slot {slot} out of range for {category_name} (count {cat.count})")
    return cat.base + slot


def decode(index: int) -> Tuple[str, int]:
    if not 0 <= index < ACTION_DIM:
        raise LayoutError(f"Action index {index} outside [0, {ACTION_DIM})")
    return _DECODE[int(index)]


def mask_from_decisions(decisions) -> np.ndarray:
    mask = np.zeros(ACTION_DIM, dtype=bool)
    for name, slot in decisions:
        mask[encode(name, slot)] = True
    return mask


def compute_mask(state) -> np.ndarray:
    """478-bit legality vector for the player who must decide in `state`."""
    from engine import legal_decisions

    return mask_from_decisions(legal_decisions(state))


def legal_indices(mask: np.ndarray) -> np.ndarray:
    return np.flatnonzero(mask)


def layout_spec() -> List[Dict[str, Any]]:
    """Machine-readable layout table for conformance checks."""
    return [
        {'category': c.name, 'base': c.base, 'count': c.count,
         'last': c.base + c.count - 1, 'semantics': c.semantics}
        for c in LAYOUT
    ]
