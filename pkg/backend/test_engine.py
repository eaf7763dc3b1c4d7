import numpy as np
import pytest

from actions import compute_mask, encode
from cards import DECK_SIZE, deck_for
from engine import (IllegalActionError, OPENING_HAND, TerminalStateError, episode_seed, is_terminal, new_game,
                    put_onto_battlefield, resolve_combat, state_hash, step, trace_digest, trace_record, winner)

KEEP = encode('KEEP')
MULLIGAN = encode('MULLIGAN')


def _keep_both(state):
    state, _, _ = step(state, KEEP)
    state, _, _ = step(state, KEEP)
    return state


def test_new_game_deals_opening_hands(red_vs_control):
    state = red_vs_control
    for ps in state.players:
        assert len(ps.hand) == OPENING_HAND
        assert len(ps.library) == DECK_SIZE - OPENING_HAND
        assert ps.life == 20
    assert state.pending_kind == 'mulligan'
    assert state.decision_player == 0


def test_same_seed_same_game():
    a = new_game(deck_for('dimir_midrange'), deck_for('domain_ramp'), seed=11)
    b = new_game(deck_for('dimir_midrange'), deck_for('domain_ramp'), seed=11)
    c = new_game(deck_for('dimir_midrange'), deck_for('domain_ramp'), seed=12)
    assert state_hash(a) == state_hash(b)
    assert state_hash(a) != state_hash(c)


def test_invalid_setup_arguments():
    with pytest.raises(ValueError):
        new_game(deck_for('mono_red_aggro'), deck_for('mono_red_aggro'), seed=0, turn_cap=0)
    with pytest.raises(ValueError):
        new_game(deck_for('mono_red_aggro'), deck_for('mono_red_aggro'), seed=0, first_player=2)


def test_mulligan_then_bottom_then_opponent_decides(red_vs_control):
    state, _, _ = step(red_vs_control, MULLIGAN)
    assert state.players[0].mulligans_taken == 1
    assert len(state.players[0].hand) == OPENING_HAND
    state, _, _ = step(state, KEEP)
    assert state.pending_kind == 'bottom'
    state, _, _ = step(state, encode('BOTTOM', 0))
    assert len(state.players[0].hand) == OPENING_HAND - 1
    assert state.pending_kind == 'mulligan'
    assert state.decision_player == 1


def test_first_player_skips_first_draw(red_vs_control):
    state = _keep_both(red_vs_control)
    assert state.phase == 'main1'
    assert state.active_player == 0
    assert len(state.players[0].hand) == OPENING_HAND


def test_step_copies_unless_inplace(red_vs_control):
    before = state_hash(red_vs_control)
    step(red_vs_control, KEEP)
    assert state_hash(red_vs_control) == before


def test_illegal_and_terminal_steps(red_vs_control):
    with pytest.raises(IllegalActionError):
        step(red_vs_control, encode('PASS'))
    state = red_vs_control.clone()
    state.outcome = 'draw'
    with pytest.raises(TerminalStateError):
        step(state, KEEP)
    with pytest.raises(TerminalStateError):
        compute_mask(state)


def test_burn_spell_to_face():
    state = _keep_both(new_game(deck_for('mono_red_aggro'), deck_for('mono_red_aggro'), seed=3))
    state.players[0].hand = ['lightning_strike']
    put_onto_battlefield(state, 0, 'mountain')
    put_onto_battlefield(state, 0, 'mountain')

    state, _, _ = step(state, encode('CAST_INSTANT', 0))
    assert state.pending_kind == 'target'
    state, _, _ = step(state, encode('TARGET', 121))
    assert state.pending_kind == 'payment'
    state, events, outcome = step(state, encode('AUTO_PAY'))
    assert outcome is None
    assert state.players[1].life == 17
    assert events.damage_to_opponent == [3, 0]
    assert state.players[0].graveyard == ['lightning_strike']
    assert all(p.tapped for p in state.players[0].battlefield)


def test_cancelled_target_returns_card_to_hand():
    state = _keep_both(new_game(deck_for('mono_red_aggro'), deck_for('mono_red_aggro'), seed=3))
    state.players[0].hand = ['lightning_strike']
    put_onto_battlefield(state, 0, 'mountain')
    put_onto_battlefield(state, 0, 'mountain')
    state, _, _ = step(state, encode('CAST_INSTANT', 0))
    state, _, _ = step(state, encode('CANCEL'))
    assert state.players[0].hand == ['lightning_strike']
    assert state.players[0].stack == []
    assert state.pending_kind == 'none'


def test_combat_deathtouch_and_lifelink(red_vs_control):
    state = red_vs_control
    sheoldred = put_onto_battlefield(state, 0, 'sheoldred_the_apocalypse')
    bat = put_onto_battlefield(state, 0, 'deep_cavern_bat')
    hero = put_onto_battlefield(state, 1, 'heartfire_hero')
    sheoldred.attacking = bat.attacking = True
    hero.blocking = sheoldred.ordinal

    resolve_combat(state)
    assert state.players[1].life == 19
    assert state.players[0].life == 21
    assert 'heartfire_hero' in state.players[1].graveyard
    assert sheoldred.damage_marked == 1
    assert not sheoldred.attacking


def test_random_games_terminate_and_conserve_cards():
    for seed in range(3):
        state = new_game(deck_for('boros_convoke'), deck_for('azorius_control'), seed=seed)
        rng = np.random.default_rng(seed)
        while state.outcome is None:
            state, _, _ = step(state, int(rng.choice(np.flatnonzero(compute_mask(state)))), inplace=True)
            assert all(ps.card_count() == DECK_SIZE for ps in state.players)
        assert state.outcome in ('win_p0', 'win_p1', 'draw')
        assert is_terminal(state) == state.outcome
        assert state.turn <= state.turn_cap + 1


def test_turn_cap_draws():
    state = new_game(deck_for('azorius_control'), deck_for('azorius_control'), seed=5, turn_cap=1)
    state = _keep_both(state)
    while state.outcome is None:
        state, _, _ = step(state, int(np.flatnonzero(compute_mask(state))[0]), inplace=True)
    assert state.outcome == 'draw'
    assert winner(state.outcome) is None


def test_replay_reproduces_trace(playout):
    start = new_game(deck_for('mono_red_aggro'), deck_for('dimir_midrange'), seed=21)
    _, actions = playout(start.clone(), seed=4)

    def replay():
        state, records = start.clone(), []
        for action in actions:
            nxt, events, _ = step(state, action)
            records.append(trace_record(state, action, events, nxt))
            state = nxt
        return records

    assert trace_digest(replay()) == trace_digest(replay())


def test_episode_seed_is_deterministic_and_spread():
    assert episode_seed(0, 3) == episode_seed(0, 3)
    assert len({episode_seed(0, e) for e in range(50)}) == 50
    assert episode_seed(1, 0) != episode_seed(0, 1)


def test_pass_through_end_phase_hands_over_the_turn(red_vs_control):
    state = _keep_both(red_vs_control)
    state, _, _ = step(state, encode('PASS'))
    assert state.phase == 'main2'
    state, _, _ = step(state, encode('PASS'))
    assert state.phase == 'end'
    state, _, _ = step(state, encode('PASS'))
    assert state.turn == 2
    assert state.active_player == 1
    assert state.phase == 'main1'
    assert len(state.players[1].hand) == OPENING_HAND + 1


def test_simultaneous_damage_two_two_into_three_three(red_vs_control):
    state = red_vs_control
    attacker = put_onto_battlefield(state, 0, 'heartfire_hero')
    attacker.power_bonus, attacker.toughness_bonus = 1, 1
    blocker = put_onto_battlefield(state, 1, 'haughty_djinn')
    blocker.toughness_bonus = -1
    attacker.attacking = True
    blocker.blocking = attacker.ordinal
    resolve_combat(state)
    assert attacker not in state.players[0].battlefield
    assert blocker in state.players[1].battlefield
    assert blocker.damage_marked == 2
    assert state.players[1].life == 20


def test_lethal_unblocked_attack_ends_the_game(red_vs_control):
    state = red_vs_control
    state.players[1].life = 3
    put_onto_battlefield(state, 0, 'haughty_djinn').attacking = True
    resolve_combat(state)
    assert state.outcome == 'win_p0'
    assert winner(state.outcome) == 0


def test_is_terminal_cases(red_vs_control):
    state = red_vs_control.clone()
    assert is_terminal(state) is None
    state.players[0].life = 0
    state.players[1].life = 12
    assert is_terminal(state) == 'win_p1'
    state = red_vs_control.clone()
    state.turn = state.turn_cap + 1
    assert is_terminal(state) == 'draw'
