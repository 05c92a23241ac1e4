import itertools
from fractions import Fraction

import numpy as np
import pytest

from errors import BudgetExceeded, ParseError, ValidationError
from foundations import Alphabet, BoundedProbe, LassoWord
from ldba import BOT, BozkurtSpec, Ldba, bozkurt_helper, bozkurt_horizon, bozkurt_objective, parse_ldba

A = frozenset({'a'})
EMPTY = frozenset()


def brute_force(spec, horizon, word):
    """Max over every choice sequence in (E + {BOT})^H, simulated step by step."""
    ldba = spec.ldba
    best = None
    for choices in itertools.product(list(ldba.eps_labels) + [None], repeat=horizon):
        state, cursor = ldba.initial, 0
        total, discount = Fraction(0), Fraction(1)
        for choice in choices:
            accepting = state in ldba.accepting
            total += discount * ((1 - spec.gamma1) if accepting else 0)
            discount *= spec.gamma1 if accepting else spec.gamma2
            if choice is not None and (state, choice) in ldba.eps_trans:
                state = ldba.eps_trans[(state, choice)]
            else:
                state = ldba.letter_trans[(state, word[cursor])]
                cursor += 1
        best = total if best is None or total > best else best
    return best


def random_spec(rng):
    component_i = tuple(f"u{i}" for i in range(int(rng.integers(1, 3))))
    component_b = tuple(f"v{i}" for i in range(int(rng.integers(1, 3))))
    states = component_i + component_b
    alphabet = Alphabet.powerset(['a'])
    pick = lambda options: options[int(rng.integers(len(options)))]
    letter_trans = {(s, letter): pick(component_b if s in component_b else states)
                    for s in states for letter in alphabet}
    labels = tuple(f"e{i}" for i in range(int(rng.integers(0, 3))))
    eps_trans = {(s, label): pick(component_b) for label in labels for s in component_i if rng.integers(2)}
    accepting = frozenset(s for s in component_b if rng.integers(2))
    ldba = Ldba(component_i, component_b, ('a',), letter_trans, eps_trans, component_i[0], accepting, labels)
    gammas = (Fraction(1, 3), Fraction(1, 2))
    return BozkurtSpec(ldba, pick(gammas), pick(gammas))


def random_word(rng, alphabet):
    symbols = alphabet.symbols
    prefix = tuple(symbols[int(i)] for i in rng.integers(2, size=int(rng.integers(0, 4))))
    cycle = tuple(symbols[int(i)] for i in rng.integers(2, size=int(rng.integers(1, 3))))
    return LassoWord(prefix, cycle, alphabet)


def test_matches_brute_force():
    rng = np.random.default_rng(17)
    for _ in range(40):
        spec = random_spec(rng)
        objective = bozkurt_objective(spec)
        word = random_word(rng, spec.ldba.alphabet)
        for n in range(5):
            horizon = bozkurt_horizon(spec, n)
            assert objective.approx(word, n) == brute_force(spec, horizon, word)


def test_helper_follows_one_resolution(eps_choice_spec):
    word = LassoWord((), (EMPTY,), eps_choice_spec.ldba.alphabet)
    assert bozkurt_helper(eps_choice_spec, 4, ['e1', BOT, BOT, BOT], word) == Fraction(7, 16)
    assert bozkurt_helper(eps_choice_spec, 4, [BOT, 'e1', BOT, BOT], word) == Fraction(3, 16)
    assert bozkurt_helper(eps_choice_spec, 4, [BOT] * 4, word) == 0
    with pytest.raises(ValidationError):
        bozkurt_helper(eps_choice_spec, 4, [BOT], word)


def test_unavailable_label_consumes_a_letter():
    alphabet = Alphabet.powerset(['a'])
    letter_trans = {('u', EMPTY): 'u', ('u', A): 'w', ('w', EMPTY): 'w', ('w', A): 'w',
                    ('v', EMPTY): 'v', ('v', A): 'v'}
    ldba = Ldba(('u', 'w'), ('v',), ('a',), letter_trans, {('u', 'e'): 'v'}, 'u', frozenset({'v'}))
    spec = BozkurtSpec(ldba, Fraction(1, 2), Fraction(1, 2))
    word = LassoWord((A,), (EMPTY,), alphabet)
    # In w the label 'e' is unavailable, so choosing it reads the next letter.
    assert bozkurt_helper(spec, 3, [BOT, 'e', 'e'], word) == bozkurt_helper(spec, 3, [BOT, BOT, BOT], word) == 0


class TestEpsChoice:
    def test_parsed_structure(self, eps_choice_spec):
        ldba = eps_choice_spec.ldba
        assert ldba.initial_component == ('u0',)
        assert ldba.accepting_component == ('v0',)
        assert ldba.eps_labels == ('e1',)
        assert ldba.available_eps('u0') == ('e1',)
        assert ldba.available_eps('v0') == ()
        assert eps_choice_spec.gamma_max == Fraction(1, 2)

    def test_horizon_rule(self, eps_choice_spec):
        for n in range(8):
            assert bozkurt_horizon(eps_choice_spec, n) == n + 2

    def test_values(self, eps_choice_spec):
        objective = bozkurt_objective(eps_choice_spec)
        word = LassoWord((), (A,), eps_choice_spec.ldba.alphabet)
        for n in range(10):
            value = objective.approx(word, n)
            assert value == Fraction(1, 2) - Fraction(1, 2 ** (n + 2))
            assert abs(value - Fraction(1, 2)) <= Fraction(1, 2 ** n)
        assert objective.value_bound == 1

    def test_reads_at_most_the_horizon(self, eps_choice_spec):
        objective = bozkurt_objective(eps_choice_spec)
        word = LassoWord((), (A,), eps_choice_spec.ldba.alphabet)
        probe = BoundedProbe(word, bound=bozkurt_horizon(eps_choice_spec, 6))
        objective.approx(probe, 6)
        assert probe.max_index_read <= 8

    def test_budget(self, eps_choice_spec):
        objective = bozkurt_objective(eps_choice_spec, budget=1000)
        word = LassoWord((), (A,), eps_choice_spec.ldba.alphabet)
        assert objective.approx(word, 7) == Fraction(1, 2) - Fraction(1, 2 ** 9)
        with pytest.raises(BudgetExceeded) as info:
            objective.approx(word, 10)
        assert info.value.required == 2 ** 12
        assert info.value.last_horizon == 12


def test_cauchy_chain():
    rng = np.random.default_rng(23)
    for _ in range(15):
        spec = random_spec(rng)
        if len(spec.ldba.eps_labels) > 1:
            continue
        objective = bozkurt_objective(spec)
        word = random_word(rng, spec.ldba.alphabet)
        values = [objective.approx(word, n) for n in range(13)]
        for n in range(13):
            for m in range(n + 1, 13):
                assert abs(values[n] - values[m]) <= Fraction(1, 2 ** n) + Fraction(1, 2 ** m)


def test_values_stay_in_range():
    rng = np.random.default_rng(29)
    for _ in range(40):
        spec = random_spec(rng)
        objective = bozkurt_objective(spec)
        word = random_word(rng, spec.ldba.alphabet)
        for n in range(6):
            assert 0 <= objective.approx(word, n) <= objective.value_bound
        assert objective.value_bound == (1 - spec.gamma1) / (1 - spec.gamma_max)


def accepting_entry(spec, w_e, word):
    """First step at which the run of ``w_e`` is in the accepting component, or None."""
    ldba = spec.ldba
    state, cursor = ldba.initial, 0
    for k, choice in enumerate(w_e):
        if state in ldba.accepting_component:
            return k
        if choice is not BOT and (state, choice) in ldba.eps_trans:
            state = ldba.eps_trans[(state, choice)]
        else:
            state = ldba.letter_trans[(state, word[cursor])]
            cursor += 1
    return None


def test_choices_after_entering_the_accepting_component_are_ignored():
    rng = np.random.default_rng(31)
    checked = 0
    for _ in range(60):
        spec = random_spec(rng)
        word = random_word(rng, spec.ldba.alphabet)
        options = list(spec.ldba.eps_labels) + [BOT]
        horizon = 6
        w_e = [options[int(i)] for i in rng.integers(len(options), size=horizon)]
        entry = accepting_entry(spec, w_e, word)
        if entry is None or len(options) == 1:
            continue
        perturbed = w_e[:entry] + [options[int(i)] for i in rng.integers(len(options), size=horizon - entry)]
        assert bozkurt_helper(spec, horizon, perturbed, word) == bozkurt_helper(spec, horizon, w_e, word)
        checked += 1
    assert checked > 0


def test_long_horizon():
    alphabet = Alphabet.powerset(['a'])
    letter_trans = {('u', EMPTY): 'v', ('u', A): 'v', ('v', EMPTY): 'v', ('v', A): 'v'}
    ldba = Ldba(('u',), ('v',), ('a',), letter_trans, {}, 'u', frozenset({'v'}))
    gamma = Fraction(99, 100)
    spec = BozkurtSpec(ldba, gamma, gamma)
    horizon = bozkurt_horizon(spec, 10)
    assert horizon > 1000
    word = LassoWord((), (A, EMPTY), alphabet)
    value = bozkurt_objective(spec).approx(word, 10)
    assert value == gamma * (1 - gamma ** (horizon - 1))
    assert abs(value - gamma) <= Fraction(1, 2 ** 10)


class TestValidation:
    def base(self, **overrides):
        letter_trans = {('u', EMPTY): 'u', ('u', A): 'v', ('v', EMPTY): 'v', ('v', A): 'v'}
        arguments = dict(initial_component=('u',), accepting_component=('v',), propositions=('a',),
                         letter_trans=letter_trans, eps_trans={}, initial='u', accepting=frozenset({'v'}))
        arguments.update(overrides)
        return Ldba(**arguments)

    def test_valid(self):
        assert self.base().states == ('u', 'v')

    def test_accepting_outside_component(self):
        with pytest.raises(ValidationError):
            self.base(accepting=frozenset({'u'}))

    def test_letter_leaves_accepting_component(self):
        letter_trans = {('u', EMPTY): 'u', ('u', A): 'v', ('v', EMPTY): 'u', ('v', A): 'v'}
        with pytest.raises(ValidationError):
            self.base(letter_trans=letter_trans)

    def test_epsilon_from_accepting_component(self):
        with pytest.raises(ValidationError):
            self.base(eps_trans={('v', 'e'): 'v'})

    def test_overlapping_components(self):
        with pytest.raises(ValidationError):
            self.base(accepting_component=('u',))

    def test_gamma_range(self):
        with pytest.raises(ValidationError):
            BozkurtSpec(self.base(), Fraction(1), Fraction(1, 2))


class TestParser:
    def test_fixture_value_bound(self, eps_choice_spec):
        assert eps_choice_spec.gamma1 == Fraction(1, 2)
        assert eps_choice_spec.ldba.accepting == frozenset({'v0'})

    @pytest.mark.parametrize('text', [
        "props a\nstates u | v\ninit u\ntrans * * self\n",
        "ldba gamma1=1/2\nprops a\nstates u | v\ninit u\ntrans * * self\n",
        "ldba gamma1=1/2 gamma2=1/2\nprops a\nstates u | v | w\ninit u\ntrans * * self\n",
        "ldba gamma1=1/2 gamma2=1/2\nprops a\nstates u | v\ninit u\neps e u v\ntrans * * self\n",
        "ldba gamma1=1/2 gamma2=1/2\nprops a\nstates u | v\ninit u\neps e u -> v\neps e u -> u\n"
        "trans * * self\n",
        "ldba gamma1=1/2 gamma2=1/2\nprops a\nstates u | v\ntrans * * self\n",
        "ldba gamma1=1/2 gamma2=1/2\nprops a\nstates u | v\ninit u\ntrans * * x\n",
    ])
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse_ldba(text)

    def test_semantic_errors_surface_as_validation_errors(self):
        text = "ldba gamma1=1/2 gamma2=1/2\nprops a\nstates u | v\ninit u\neps e v -> v\ntrans * * self\n"
        with pytest.raises(ValidationError):
            parse_ldba(text)
