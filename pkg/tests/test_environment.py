from fractions import Fraction

import pytest

from errors import BudgetExceeded, ParseError, ValidationError
from environment import (TWO_64, FunctionPolicy, Mdp, SamplingSession, TablePolicy, UniformPolicy,
                         build_gridworld, draw_index, dump_mdp, parse_grid, parse_mdp, policy_value_estimate,
                         rollout, thresholds_for)
from gltl import parse_ltl, gltl_objective
from objective_core import compose_with_labeling

HALF = Fraction(1, 2)
TOP = TWO_64 - 1


def always(action):
    return FunctionPolicy(('stay', 'fair'), lambda history: action)


def test_thresholds_and_draws():
    cuts = thresholds_for([HALF, HALF])
    assert cuts == [1 << 63, TWO_64]
    assert draw_index(cuts, 0) == 0
    assert draw_index(cuts, (1 << 63) - 1) == 0
    assert draw_index(cuts, 1 << 63) == 1
    assert draw_index(cuts, TOP) == 1
    thirds = thresholds_for([Fraction(1, 3)] * 3)
    assert thirds[-1] == TWO_64
    assert [draw_index(thirds, v) for v in (0, TWO_64 // 2, TOP)] == [0, 1, 2]


class TestMdp:
    def test_coin(self, coin):
        mdp, _ = coin
        assert mdp.states == ('s0', 's1')
        assert mdp.row('s0', 'fair') == {'s0': HALF, 's1': HALF}
        assert mdp.support('s0', 'stay') == ('s0',)
        assert not mdp.is_deterministic()
        assert mdp.sample_next('s0', 'fair', 0) == 's0'
        assert mdp.sample_next('s0', 'fair', TOP) == 's1'
        assert len(mdp.pairs) == 4

    def test_zero_probabilities_are_not_support(self):
        mdp = Mdp(('s', 't'), ('a',), {('s', 'a'): {'s': 0, 't': 1}, ('t', 'a'): {'t': 1}}, 's')
        assert mdp.support('s', 'a') == ('t',)
        assert mdp.sample_next('s', 'a', 0) == 't'

    def test_row_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            Mdp(('s',), ('a',), {('s', 'a'): {'s': Fraction(9, 10)}}, 's')

    def test_missing_row(self):
        with pytest.raises(ValidationError):
            Mdp(('s',), ('a', 'b'), {('s', 'a'): {'s': 1}}, 's')

    def test_unknown_target(self):
        with pytest.raises(ValidationError):
            Mdp(('s',), ('a',), {('s', 'a'): {'t': 1}}, 's')

    def test_negative_probability(self):
        with pytest.raises(ValidationError):
            Mdp(('s', 't'), ('a',), {('s', 'a'): {'s': 2, 't': -1}, ('t', 'a'): {'t': 1}}, 's')

    def test_unknown_initial(self):
        with pytest.raises(ValidationError):
            Mdp(('s',), ('a',), {('s', 'a'): {'s': 1}}, 'z')

    def test_unknown_action(self, coin):
        mdp, _ = coin
        with pytest.raises(ValidationError):
            mdp.sample_next('s0', 'jump', 0)
        with pytest.raises(ValidationError):
            mdp.row('s0', 'jump')


class TestPolicies:
    def test_table_policy_defaults_to_first_action(self):
        history = ((), 's0')
        policy = TablePolicy(('stay', 'fair'), {history: 'fair'})
        assert policy.choose(history, TOP) == 'fair'
        assert policy.action(((), 's1')) == 'stay'
        assert len(policy) == 1
        assert policy == TablePolicy(('stay', 'fair'), {history: 'fair'})

    def test_table_policy_rejects_unknown_actions(self):
        with pytest.raises(ValidationError):
            TablePolicy(('stay',), {((), 's0'): 'jump'})

    def test_uniform(self):
        policy = UniformPolicy(('stay', 'fair'))
        assert policy.distribution(((), 's0')) == {'stay': HALF, 'fair': HALF}
        assert policy.choose(((), 's0'), 0) == 'stay'
        assert policy.choose(((), 's0'), TOP) == 'fair'

    def test_function_policy_distribution(self):
        policy = FunctionPolicy(('stay', 'fair'), lambda history: {'stay': Fraction(1, 4), 'fair': Fraction(3, 4)})
        assert policy.choose(((), 's0'), TWO_64 // 8) == 'stay'
        assert policy.choose(((), 's0'), TWO_64 // 2) == 'fair'

    def test_invalid_distributions(self):
        short = FunctionPolicy(('stay', 'fair'), lambda history: {'stay': HALF})
        with pytest.raises(ValidationError):
            short.choose(((), 's0'), 0)
        with pytest.raises(ValidationError):
            always('jump').choose(((), 's0'), 0)


class TestSamplingSession:
    def run(self, session, steps=50):
        return [session.step('fair') for _ in range(steps)]

    def test_seeded_sessions_repeat(self, coin):
        mdp, _ = coin
        assert self.run(SamplingSession(mdp, seed=5)) == self.run(SamplingSession(mdp, seed=5))
        assert self.run(SamplingSession(mdp, seed=5)) != self.run(SamplingSession(mdp, seed=6))

    def test_transcript(self, coin):
        mdp, _ = coin
        session = SamplingSession(mdp, seed=1)
        nxt = session.step('fair')
        session.reset()
        first, second = session.transcript
        assert (first.state, first.action, first.next_state) == ('s0', 'fair', nxt)
        assert second.action is None and second.next_state == 's0'
        assert session.samples == 1 and session.resets == 1

    def test_transcript_can_be_disabled(self, coin):
        mdp, _ = coin
        session = SamplingSession(mdp, seed=1, keep_transcript=False)
        self.run(session, 10)
        session.reset()
        assert session.transcript == []
        assert session.samples == 10

    def test_budget(self, coin):
        mdp, _ = coin
        session = SamplingSession(mdp, seed=1, budget=3)
        self.run(session, 3)
        with pytest.raises(BudgetExceeded) as info:
            session.step('stay')
        assert info.value.budget == 3

    def test_unknown_action(self, coin):
        mdp, _ = coin
        with pytest.raises(ValidationError):
            SamplingSession(mdp, seed=1).step('jump')

    def test_spawned_sessions_are_independent(self, coin):
        mdp, _ = coin
        left, right = SamplingSession(mdp, seed=3).spawn(2)
        assert self.run(left, 64) != self.run(right, 64)
        again, _ = SamplingSession(mdp, seed=3).spawn(2)
        assert self.run(again, 64) == self.run(SamplingSession(mdp, seed=3).spawn(2)[0], 64)

    def test_frequencies(self, coin):
        mdp, _ = coin
        outcomes = self.run(SamplingSession(mdp, seed=11), 20000)
        assert abs(outcomes.count('s1') / 20000 - 0.5) < 0.02


class TestRollouts:
    def test_rollout_pairs(self, coin):
        mdp, _ = coin
        session = SamplingSession(mdp, seed=2)
        pairs = rollout(session, always('fair'), 4)
        assert len(pairs) == 4
        assert pairs[0] == ('s0', 'fair')
        assert all(action == 'fair' for _, action in pairs)
        assert session.samples == 4 and session.resets == 1

    def test_value_estimate(self, coin):
        mdp, labeling = coin
        objective = compose_with_labeling(gltl_objective(parse_ltl('X heads'), propositions=('heads',)), labeling)
        assert policy_value_estimate(mdp, always('stay'), objective, 3, episodes=50, horizon=2, seed=4) == 0
        estimate = policy_value_estimate(mdp, always('fair'), objective, 3, episodes=4000, horizon=2, seed=4)
        assert abs(estimate - HALF) < Fraction(1, 20)

    def test_value_estimate_validation(self, coin):
        mdp, labeling = coin
        objective = compose_with_labeling(gltl_objective(parse_ltl('X heads'), propositions=('heads',)), labeling)
        with pytest.raises(ValidationError):
            policy_value_estimate(mdp, always('fair'), objective, 3, episodes=0, horizon=2)
        with pytest.raises(ValidationError):
            policy_value_estimate(mdp, always('fair'), objective, 3, episodes=10, horizon=1)


class TestGridWorld:
    def test_walls_and_slip(self):
        mdp, labeling = build_gridworld(2, 1, goal=(1, 0), slip=Fraction(1, 4))
        assert mdp.row((0, 0), 'left') == {(0, 0): 1}
        assert mdp.row((0, 0), 'up') == {(0, 0): 1}
        assert mdp.row((0, 0), 'right') == {(1, 0): Fraction(3, 4), (0, 0): Fraction(1, 4)}
        assert labeling(((1, 0), 'up')) == frozenset({'goal'})
        assert labeling(((0, 0), 'up')) == frozenset()

    def test_lava_goal_layout(self, lava_goal_grid):
        mdp, labeling = lava_goal_grid
        assert len(mdp.states) == 8
        assert mdp.initial == (0, 0)
        assert mdp.is_deterministic()
        assert labeling(((3, 0), 'down')) == frozenset({'goal'})
        assert labeling(((1, 0), 'up')) == labeling(((2, 0), 'left')) == frozenset({'lava'})
        assert mdp.row((0, 1), 'right') == {(1, 1): 1}

    @pytest.mark.parametrize('kwargs', [
        dict(width=0, height=2),
        dict(width=2, height=2, lava=[(2, 0)]),
        dict(width=2, height=2, goal=(0, 1), lava=[(0, 1)]),
        dict(width=2, height=2, slip=1),
        dict(width=2, height=2, start=(-1, 0)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            build_gridworld(**kwargs)

    @pytest.mark.parametrize('text', [
        "lava 1 0\n",
        "grid 4\n",
        "grid 4 2\nwater 1 1\n",
        "grid 4 2\nslip\n",
        "grid four two\n",
    ])
    def test_malformed_grid_text(self, text):
        with pytest.raises(ParseError):
            parse_grid(text)


class TestMdpText:
    def test_labels(self, coin):
        mdp, labeling = coin
        assert labeling(('s1', 'stay')) == frozenset({'heads'})
        assert labeling(('s0', 'fair')) == frozenset()
        assert labeling.domain == mdp.pairs

    def test_round_trip(self, coin):
        mdp, labeling = coin
        again, relabeled = parse_mdp(dump_mdp(mdp, labeling))
        assert again == mdp
        assert all(relabeled(pair) == labeling(pair) for pair in mdp.pairs)

    def test_without_labels(self):
        mdp, labeling = parse_mdp("mdp\nstates s\nactions a\ninit s\nrow s a : s=1\n")
        assert labeling is None
        assert mdp.initial == 's'

    @pytest.mark.parametrize('text', [
        "states s\nactions a\ninit s\nrow s a : s=1\n",
        "mdp\nstates s\nactions a\nrow s a : s=1\n",
        "mdp\nstates s\nactions a\ninit s\nrow s a s=1\n",
        "mdp\nstates s\nactions a\ninit s\nrow s a : s\n",
        "mdp\nstates s\nactions a\ninit s\nrow s a : s=1\nrow s a : s=1\n",
        "mdp\nstates s\nactions a\ninit s\nrow s a : s=1\nlabel t {x}\n",
        "mdp\nstates s\nactions a\ninit s\nrow s a : s=1\nreward s 1\n",
    ])
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse_mdp(text)

    def test_rows_are_validated(self):
        with pytest.raises(ValidationError):
            parse_mdp("mdp\nstates s t\nactions a\ninit s\nrow s a : s=1/2\nrow t a : t=1\n")
