import numpy as np
import pytest

from actions import (ACTION_DIM, CATEGORY_NAMES, LayoutError, TARGET_OPP_PLAYER, compute_mask, decode, encode,
                     layout_spec, legal_indices)
from engine import IllegalActionError, step


def test_layout_tiles_the_action_space_without_gaps():
    rows = layout_spec()
    assert rows[0]['base'] == 0
    for prev, nxt in zip(rows, rows[1:]):
        assert nxt['base'] == prev['last'] + 1
    assert rows[-1]['last'] == ACTION_DIM - 1 == 477


def test_known_offsets():
    assert encode('PASS') == 0
    assert encode('KEEP') == 1
    assert encode('BOTTOM', 0) == 6
    assert encode('CAST_INSTANT', 0) == 46
    assert encode('ACTIVATE', 0) == 56
    assert encode('TARGET', TARGET_OPP_PLAYER) == 417
    assert encode('MANA_SOURCE', 59) == 477


def test_decode_inverts_encode_on_every_index():
    for index in range(ACTION_DIM):
        name, slot = decode(index)
        assert name in CATEGORY_NAMES
        assert encode(name, slot) == index


def test_out_of_range_raises():
    with pytest.raises(LayoutError):
        decode(ACTION_DIM)
    with pytest.raises(LayoutError):
        encode('PLAY_LAND', 10)
    with pytest.raises(LayoutError):
        encode('SHUFFLE')


def test_opening_mask_is_keep_or_mulligan(red_vs_control):
    mask = compute_mask(red_vs_control)
    assert mask.shape == (ACTION_DIM,)
    assert mask.dtype == np.bool_
    assert legal_indices(mask).tolist() == [encode('KEEP'), encode('MULLIGAN')]


@pytest.mark.slow
def test_mask_matches_engine_legality_over_random_states(random_states):
    rng = np.random.default_rng(0)
    counts = []
    for state in random_states(10_000, seed=11):
        mask = compute_mask(state)
        legal = legal_indices(mask)
        assert legal.size > 0
        counts.append(legal.size)
        for index in legal:
            step(state, int(index))
        illegal = np.flatnonzero(~mask)
        for index in rng.choice(illegal, size=min(4, illegal.size), replace=False):
            with pytest.raises(IllegalActionError):
                step(state, int(index))
    assert len(counts) == 10_000
    assert 2 <= np.median(counts) <= 15
