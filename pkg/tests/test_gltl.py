import itertools
from fractions import Fraction

import numpy as np
import pytest

from errors import BudgetExceeded, ParseError, ValidationError
from foundations import Alphabet, BoundedProbe, LassoWord, parse_lasso
from gltl import (EventProfile, enumerate_streams, event_form, gltl_horizon, gltl_objective, has_resolving_run,
                  merge_events, merge_lasso_events, parse_gltl, parse_ltl, resolved_mass,
                  simultaneous_expiration_check, stream_probability)
from ltl import And, Atom, Finally, Globally, Next, Not, Until, ltl_eval, render
from property_checks import PropertyChecker, random_formula

HALF = Fraction(1, 2)
AB = Alphabet.powerset(['a', 'b'])
HEADS = Alphabet.powerset(['heads'])


def literal_value(phi, word, horizon, props=('a', 'b')):
    """Sum over every length-H stream with a step where all events trigger, evaluated on the stream itself."""
    psi, profile = event_form(phi, reserved=props)
    merged = Alphabet.powerset(tuple(props) + profile.events)
    everything = frozenset(profile.events)
    subsets = [frozenset(c) for r in range(len(profile.events) + 1)
               for c in itertools.combinations(profile.events, r)]
    total = Fraction(0)
    for stream in itertools.product(subsets, repeat=horizon):
        if everything not in stream:
            continue
        probability = Fraction(1)
        for letter in stream:
            for event, theta in zip(profile.events, profile.thetas):
                probability *= theta if event in letter else 1 - theta
        joined = tuple(word[i] | stream[i] for i in range(horizon))
        if ltl_eval(psi, LassoWord(joined, (frozenset(),), merged)):
            total += probability
    return total


class TestParser:
    def test_conjunction_example(self):
        phi = parse_gltl('F[9/10] goal & G[9/10] lava')
        assert phi == And(Finally(Atom('goal'), Fraction(9, 10)), Globally(Atom('lava'), Fraction(9, 10)))

    def test_atom(self):
        phi = parse_gltl('a')
        assert phi == Atom('a')
        assert phi.span == (0, 1)

    def test_nested_shape(self):
        phi = parse_gltl('G[1/2] (a & F[1/2] b)')
        assert phi == Globally(And(Atom('a'), Finally(Atom('b'), HALF)), HALF)

    def test_until_is_right_associative(self):
        phi = parse_gltl('a U[1/2] b U[1/3] c')
        assert phi == Until(Atom('a'), Until(Atom('b'), Atom('c'), Fraction(1, 3)), HALF)

    def test_operator_letters_inside_names(self):
        assert parse_ltl('Xa & Goal') == And(Atom('Xa'), Atom('Goal'))
        assert parse_ltl('X a') == Next(Atom('a'))

    def test_comments_are_ignored(self):
        assert parse_gltl('F[1/2] a  # reach a') == Finally(Atom('a'), HALF)

    @pytest.mark.parametrize('text', [
        'F a',
        'F[3/2] a',
        'F[0] a',
        'F[1] a',
        'F[half] a',
        'G[1/2] (a &',
        'a b',
        '',
        'X',
    ])
    def test_gltl_errors(self, text):
        with pytest.raises(ParseError):
            parse_gltl(text)

    def test_ltl_rejects_thetas(self):
        with pytest.raises(ParseError):
            parse_ltl('F[1/2] a')

    def test_error_carries_position(self):
        with pytest.raises(ParseError) as info:
            parse_gltl('a & & b')
        assert info.value.position == 4


class TestEventForm:
    def test_atom(self):
        psi, profile = event_form(Atom('a'))
        assert psi == Atom('a')
        assert profile.events == ()

    def test_eventually(self):
        psi, profile = event_form(parse_gltl('F[1/2] a'))
        assert psi == Until(Not(Atom('e0')), Atom('a'))
        assert profile.events == ('e0',)
        assert profile.theta('e0') == HALF

    def test_worked_example(self):
        psi, profile = event_form(parse_gltl('G[9/10] (a & F[9/10] b)'))
        inner = And(Atom('a'), Until(Not(Atom('e1')), Atom('b')))
        assert psi == Until(inner, And(inner, Atom('e0')))
        assert profile.events == ('e0', 'e1')
        assert profile.thetas == (Fraction(9, 10), Fraction(9, 10))

    def test_until(self):
        psi, _ = event_form(parse_gltl('a U[1/3] X b'))
        assert psi == Until(And(Atom('a'), Not(Atom('e0'))), Next(Atom('b')))

    def test_fresh_names_avoid_atoms(self):
        psi, profile = event_form(parse_gltl('F[1/2] e0'), reserved=('e0_',))
        assert profile.events == ('e0__',)
        assert render(psi) == '!e0__ U e0'

    def test_plain_operators_stay(self):
        psi, profile = event_form(parse_ltl('G F a'))
        assert psi == Globally(Finally(Atom('a')))
        assert profile.events == ()


class TestStreams:
    def test_profile(self):
        profile = EventProfile(('e0', 'e1'), (HALF, Fraction(1, 3)))
        assert profile.joint == Fraction(1, 6)
        assert profile.letter_probability(frozenset({'e1'})) == Fraction(1, 6)
        assert profile.letter_probability(frozenset()) == Fraction(1, 3)
        with pytest.raises(ValidationError):
            profile.theta('e7')
        with pytest.raises(ValidationError):
            EventProfile(('e0',), ())

    def test_stream_probabilities_sum_to_one(self):
        profile = EventProfile(('e0', 'e1'), (HALF, Fraction(2, 3)))
        total = sum((stream_probability(profile, s) for s in enumerate_streams(profile, 3)), Fraction(0))
        assert total == 1

    def test_partition_mass(self):
        profile = EventProfile(('e0', 'e1'), (HALF, Fraction(3, 4)))
        for horizon in range(5):
            mass = sum((stream_probability(profile, s) for s in enumerate_streams(profile, horizon)
                        if has_resolving_run(profile, s, 1)), Fraction(0))
            assert mass == resolved_mass(profile, horizon) == 1 - (1 - profile.joint) ** horizon

    def test_resolving_runs(self):
        profile = EventProfile(('e0',), (HALF,))
        on, off = frozenset({'e0'}), frozenset()
        assert has_resolving_run(profile, (off, on, on), 2)
        assert not has_resolving_run(profile, (on, off, on), 2)
        for horizon in range(6):
            mass = sum((stream_probability(profile, s) for s in enumerate_streams(profile, horizon)
                        if has_resolving_run(profile, s, 2)), Fraction(0))
            assert mass == resolved_mass(profile, horizon, depth=1)

    def test_merge(self):
        merged = Alphabet.powerset(['a', 'e0'])
        a, e = frozenset({'a'}), frozenset({'e0'})
        word = merge_events((a, frozenset()), (e,), merged)
        assert word.unroll(4) == (frozenset({'a', 'e0'}), frozenset(), frozenset(), frozenset())
        with pytest.raises(ValidationError):
            merge_events((a,), (e, e), merged)
        lasso = LassoWord((a,), (frozenset(), a), Alphabet.powerset(['a']))
        whole = merge_lasso_events(lasso, (e, e, e), merged)
        assert whole.unroll(6) == (frozenset({'a', 'e0'}), e, frozenset({'a', 'e0'}), frozenset(), a, frozenset())


class TestHorizon:
    def test_single_event(self):
        profile = EventProfile(('e0',), (HALF,))
        for n in range(10):
            assert gltl_horizon(profile, 0, n) == n

    def test_without_events(self):
        assert gltl_horizon(EventProfile((), ()), 2, 7) == 3

    def test_with_next_depth(self):
        profile = EventProfile(('e0',), (HALF,))
        for n in range(1, 8):
            horizon = gltl_horizon(profile, 1, n)
            k = horizon // 2
            assert horizon % 2 == 0
            assert Fraction(3, 4) ** k <= Fraction(1, 2 ** n) < Fraction(3, 4) ** (k - 1)


class TestObjective:
    def eventually_a(self):
        return gltl_objective(parse_gltl('F[1/2] a'), propositions=('a', 'b'))

    @pytest.mark.parametrize('k', [0, 1, 2, 3])
    @pytest.mark.parametrize('n', [4, 8])
    def test_first_a_at_index(self, k, n):
        word = LassoWord((frozenset(),) * k + (frozenset({'a'}),), (frozenset(),), AB)
        value = self.eventually_a().approx(word, n)
        assert HALF ** k - Fraction(1, 2 ** n) <= value <= HALF ** k
        assert value == HALF ** k - Fraction(1, 2 ** n)

    def test_a_immediately(self):
        objective = self.eventually_a()
        word = parse_lasso('{a}^{}', AB)
        for n in range(1, 10):
            assert objective.approx(word, n) == 1 - Fraction(1, 2 ** n)

    def test_a_never(self):
        objective = self.eventually_a()
        for n in range(8):
            assert objective.approx(parse_lasso('^{}', AB), n) == 0

    def test_alphabet_and_bound(self):
        objective = self.eventually_a()
        assert objective.alphabet == AB
        assert objective.value_bound == 1
        assert gltl_objective(parse_gltl('F[1/2] a')).alphabet == Alphabet.powerset(['a'])

    def test_reads_only_the_horizon(self):
        objective = self.eventually_a()
        probe = BoundedProbe(parse_lasso('^{}', AB), bound=6)
        objective.approx(probe, 6)
        assert probe.max_index_read == 6

    @pytest.mark.parametrize('text,n', [
        ('F[1/2] a', 4),
        ('G[1/2] a', 4),
        ('a U[2/3] b', 3),
        ('G[1/2] (a | F[1/2] b)', 2),
        ('F[1/2] a & G[3/4] !b', 2),
    ])
    def test_matches_literal_enumeration(self, text, n):
        phi = parse_gltl(text)
        objective = gltl_objective(phi, propositions=('a', 'b'))
        horizon = objective.horizon(n)
        rng = np.random.default_rng(len(text))
        symbols = AB.symbols
        for _ in range(4):
            prefix = tuple(symbols[int(i)] for i in rng.integers(4, size=int(rng.integers(0, 4))))
            cycle = tuple(symbols[int(i)] for i in rng.integers(4, size=int(rng.integers(1, 3))))
            word = LassoWord(prefix, cycle, AB)
            assert objective.approx(word, n) == literal_value(phi, word, horizon)

    def test_one_sided_convergence(self):
        rng = np.random.default_rng(41)
        symbols = AB.symbols
        for _ in range(30):
            phi = random_formula(rng, 3, allow_next=False, max_expiring=1)
            objective = gltl_objective(phi, propositions=('a', 'b'))
            prefix = tuple(symbols[int(i)] for i in rng.integers(4, size=int(rng.integers(0, 4))))
            word = LassoWord(prefix, (symbols[int(rng.integers(4))],), AB)
            values = [objective.approx(word, n) for n in range(9)]
            for n in range(8):
                assert 0 <= values[n] <= values[n + 1] <= values[n] + Fraction(1, 2 ** n)

    def test_no_expiring_operators(self):
        objective = gltl_objective(parse_ltl('X heads'))
        assert objective.horizon(10) == 2
        assert objective.approx(parse_lasso('{};{heads}^{}', HEADS), 3) == 1
        assert objective.approx(parse_lasso('{heads};{}^{heads}', HEADS), 3) == 0

    def test_plain_temporal_operators_rejected(self):
        with pytest.raises(ValidationError):
            gltl_objective(parse_ltl('F a'))
        with pytest.raises(ValidationError):
            gltl_objective(And(Finally(Atom('a'), HALF), Globally(Atom('b'))))

    def test_unknown_atoms_rejected(self):
        with pytest.raises(ValidationError):
            gltl_objective(parse_gltl('F[1/2] c'), propositions=('a', 'b'))

    def test_budget(self):
        objective = gltl_objective(parse_gltl('F[1/2] a & G[1/2] b'), budget=100)
        with pytest.raises(BudgetExceeded) as info:
            objective.approx(parse_lasso('^{a,b}', AB), 3)
        assert info.value.required == 4 ** objective.horizon(3)


class TestSimultaneousExpiration:
    def test_identical_words(self):
        phi = parse_gltl('F[1/2] a')
        word = parse_lasso('{};{a}^{}', AB)
        stream = (frozenset(), frozenset({'e0'}))
        assert simultaneous_expiration_check(phi, 2, stream, word, word, propositions=('a', 'b'))

    def test_globally_words_diverging_after_the_horizon(self):
        phi = parse_gltl('G[1/2] a')
        w1 = parse_lasso('{a};{a};{a};{a}^{a}', AB)
        w2 = parse_lasso('{a};{a};{a};{a}^{}', AB)
        on = frozenset({'e0'})
        stream = (frozenset(), frozenset(), on)
        assert simultaneous_expiration_check(phi, 3, stream, w1, w2, propositions=('a', 'b'))

    def test_next_above_an_expiring_operator(self):
        phi = parse_gltl('X G[1/2] a')
        w1 = parse_lasso('{};{a};{a}^{}', AB)
        w2 = parse_lasso('{};{a};{a}^{a}', AB)
        on = frozenset({'e0'})
        assert simultaneous_expiration_check(phi, 3, (frozenset(), on, on), w1, w2, propositions=('a', 'b'))

    def test_preconditions(self):
        phi = parse_gltl('F[1/2] a')
        word = parse_lasso('^{}', AB)
        other = parse_lasso('{a}^{}', AB)
        on = frozenset({'e0'})
        with pytest.raises(ValidationError):
            simultaneous_expiration_check(phi, 2, (on,), word, word, propositions=('a', 'b'))
        with pytest.raises(ValidationError):
            simultaneous_expiration_check(phi, 2, (on, frozenset()), word, word, propositions=('a', 'b'))
        with pytest.raises(ValidationError):
            simultaneous_expiration_check(phi, 1, (on,), word, other, propositions=('a', 'b'))
        with pytest.raises(ValidationError):
            simultaneous_expiration_check(parse_gltl('X X F[1/2] a'), 2, (on, on), word, word,
                                          propositions=('a', 'b'))

    def test_randomized_sweep(self):
        report = PropertyChecker(seed=1, trials=500).run_suite('simultaneous_expiration')
        assert report == {'status': 'passed', 'trials': 500, 'failures': 0}
