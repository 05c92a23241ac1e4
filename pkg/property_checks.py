"""
Randomized property suites behind the ``check`` subcommand.

Each suite draws seeded random instances, checks one contract of the
toolkit, and reports a status dictionary. Results carry no timestamps, so a
fixed seed and trial count always give the same document.
"""

import itertools
import logging
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from config import config
from errors import ValidationError
from environment import Mdp, TablePolicy
from foundations import Alphabet, BoundedProbe, LassoWord, format_lasso
from gltl import (enumerate_streams, event_form, gltl_objective, has_resolving_run, resolved_mass,
                  simultaneous_expiration_check, stream_probability)
from ldba import BozkurtSpec, Ldba, bozkurt_objective
from ltl import And, Atom, Finally, Formula, Globally, Next, Not, Or, Until, render, xdepth
from objective_core import (ComputableObjective, LabelingFunction, LabeledWord, compose_with_labeling,
                            discounted_objective, finite_horizon_objective,
                            modulus_of_continuity, n_for_eps, truncate_objective)
from pac_rl import LiftedMdp, evaluate_policy, exact_plan
from reward_machine import SimpleRewardMachine, srm_objective

logger = logging.getLogger(__name__)

THETAS = (Fraction(1, 2), Fraction(2, 3), Fraction(3, 4))


# --- random instances ------------------------------------------------------------

def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def random_lasso(rng: np.random.Generator, alphabet: Alphabet, max_prefix: int = 4, max_cycle: int = 3) -> LassoWord:
    symbols = alphabet.symbols
    prefix = [_pick(rng, symbols) for _ in range(int(rng.integers(0, max_prefix + 1)))]
    cycle = [_pick(rng, symbols) for _ in range(int(rng.integers(1, max_cycle + 1)))]
    return LassoWord(tuple(prefix), tuple(cycle), alphabet)


def random_srm(rng: np.random.Generator, max_states: int = 4,
               gammas=(Fraction(1, 3), Fraction(1, 2), Fraction(9, 10))) -> SimpleRewardMachine:
    states = tuple(f"u{i}" for i in range(int(rng.integers(1, max_states + 1))))
    props = ('a',) if rng.integers(2) else ('a', 'b')
    alphabet = Alphabet.powerset(props)
    rewards = (Fraction(0), Fraction(1, 2), Fraction(1), Fraction(-1))
    delta_u = {(state, letter): _pick(rng, states) for state in states for letter in alphabet}
    delta_r = {(source, target): _pick(rng, rewards) for source in states for target in states}
    return SimpleRewardMachine(states, props, delta_u, delta_r, states[0], _pick(rng, gammas))


def random_ldba_spec(rng: np.random.Generator, max_eps: int = 1,
                     gammas=(Fraction(1, 3), Fraction(1, 2))) -> BozkurtSpec:
    component_i = tuple(f"u{i}" for i in range(int(rng.integers(1, 3))))
    component_b = tuple(f"v{i}" for i in range(int(rng.integers(1, 3))))
    states = component_i + component_b
    props = ('a',)
    alphabet = Alphabet.powerset(props)
    letter_trans = {}
    for state in states:
        for letter in alphabet:
            letter_trans[(state, letter)] = _pick(rng, component_b if state in component_b else states)
    labels = tuple(f"e{i}" for i in range(int(rng.integers(0, max_eps + 1))))
    eps_trans = {}
    for label in labels:
        for state in component_i:
            if rng.integers(2):
                eps_trans[(state, label)] = _pick(rng, component_b)
    accepting = frozenset(state for state in component_b if rng.integers(2))
    ldba = Ldba(component_i, component_b, props, letter_trans, eps_trans, component_i[0], accepting, labels)
    return BozkurtSpec(ldba, _pick(rng, gammas), _pick(rng, gammas))


def random_formula(rng: np.random.Generator, depth: int, props=('a', 'b'), thetas=THETAS,
                   allow_next: bool = True, max_expiring: Optional[int] = None) -> Formula:
    """Random GLTL formula of nesting depth at most ``depth``."""
    budget = [max_expiring if max_expiring is not None else 1 << 30]

    def build(level: int) -> Formula:
        if level == 0 or rng.integers(4) == 0:
            return Atom(_pick(rng, props))
        kinds = ['not', 'and', 'or']
        if allow_next:
            kinds.append('next')
        if budget[0] > 0:
            kinds += ['G', 'F', 'U']
        kind = _pick(rng, kinds)
        if kind in ('G', 'F', 'U'):
            budget[0] -= 1
            theta = _pick(rng, thetas)
            if kind == 'G':
                return Globally(build(level - 1), theta)
            if kind == 'F':
                return Finally(build(level - 1), theta)
            return Until(build(level - 1), build(level - 1), theta)
        if kind == 'not':
            return Not(build(level - 1))
        if kind == 'next':
            return Next(build(level - 1))
        left, right = build(level - 1), build(level - 1)
        return And(left, right) if kind == 'and' else Or(left, right)

    return build(depth)


def random_mdp(rng: np.random.Generator, max_states: int = 3, n_actions: int = 2, denominator: int = 4) -> Mdp:
    states = tuple(f"s{i}" for i in range(int(rng.integers(1, max_states + 1))))
    actions = tuple(f"a{i}" for i in range(n_actions))
    rows = {}
    for state in states:
        for action in actions:
            cuts = sorted(int(c) for c in rng.integers(0, denominator + 1, size=len(states) - 1))
            bounds = [0] + cuts + [denominator]
            rows[(state, action)] = {
                target: Fraction(bounds[i + 1] - bounds[i], denominator)
                for i, target in enumerate(states) if bounds[i + 1] > bounds[i]
            }
    return Mdp(states, actions, rows, states[0])


# --- suites -----------------------------------------------------------------------

def cauchy_holds(objective, word, max_n: int) -> Optional[str]:
    values = [objective.approx(word, n) for n in range(max_n + 1)]
    for n, m in itertools.combinations(range(max_n + 1), 2):
        if abs(values[n] - values[m]) > Fraction(1, 2 ** n) + Fraction(1, 2 ** m):
            return f"|q_{n} - q_{m}| = {abs(values[n] - values[m])} on {format_lasso(word)}"
    return None


def modulus_consistent(objective: ComputableObjective, eps: Fraction) -> Optional[str]:
    """Every word sharing a modulus-length prefix must get the same approximation at n(eps)."""
    horizon = modulus_of_continuity(objective, eps)
    alphabet = objective.alphabet
    n = n_for_eps(eps)
    for prefix in alphabet.words(horizon):
        values = {objective.approx(LassoWord(prefix, tail, alphabet), n) for tail in alphabet.words(2)}
        if len(values) > 1:
            return f"{objective.name}: prefix {prefix} of length {horizon} gives values {sorted(values)}"
    return None


class PropertyChecker:
    """Runs the property suites and collects their status."""

    def __init__(self, seed: Optional[int] = None, trials: Optional[int] = None):
        self.seed = seed if seed is not None else config.default_seed
        self.trials = trials if trials is not None else config.check_trials
        self.suites: Dict[str, Callable[[np.random.Generator], Optional[str]]] = {
            'cauchy_srm': self.check_cauchy_srm,
            'cauchy_ldba': self.check_cauchy_ldba,
            'cauchy_gltl': self.check_cauchy_gltl,
            'labeling_composition': self.check_labeling,
            'modulus_consistency': self.check_modulus,
            'simultaneous_expiration': self.check_expiration,
            'gltl_partition': self.check_partition,
            'planner_consistency': self.check_planner,
        }

    def check_cauchy_srm(self, rng: np.random.Generator) -> Optional[str]:
        machine = random_srm(rng)
        return cauchy_holds(srm_objective(machine), random_lasso(rng, machine.alphabet), 12)

    def check_cauchy_ldba(self, rng: np.random.Generator) -> Optional[str]:
        spec = random_ldba_spec(rng)
        return cauchy_holds(bozkurt_objective(spec), random_lasso(rng, spec.ldba.alphabet), 12)

    def check_cauchy_gltl(self, rng: np.random.Generator) -> Optional[str]:
        phi = random_formula(rng, 3, allow_next=False, max_expiring=1)
        objective = gltl_objective(phi, propositions=('a', 'b'))
        return cauchy_holds(objective, random_lasso(rng, objective.alphabet), 12)

    def check_labeling(self, rng: np.random.Generator) -> Optional[str]:
        machine = random_srm(rng)
        mdp = random_mdp(rng)
        features = machine.alphabet.symbols
        labels = {state: _pick(rng, features) for state in mdp.states}
        labeling = LabelingFunction.from_state_labels(mdp.states, mdp.actions, labels, machine.alphabet)
        xi = srm_objective(machine)
        composed = compose_with_labeling(xi, labeling)
        word = random_lasso(rng, mdp.pairs)
        n = int(rng.integers(0, 10))
        probe_composed, probe_generic = BoundedProbe(word), BoundedProbe(LabeledWord(word, labeling))
        left, right = composed.approx(probe_composed, n), xi.approx(probe_generic, n)
        if left != right:
            return f"composed {left} != generic {right} at n={n}"
        if probe_composed.max_index_read != probe_generic.max_index_read:
            return f"read depths {probe_composed.max_index_read} != {probe_generic.max_index_read}"
        return None

    def check_modulus(self, rng: np.random.Generator) -> Optional[str]:
        family = _pick(rng, ('srm', 'ldba', 'gltl', 'discounted'))
        objective = random_single_prop_objective(rng, family)
        eps = Fraction(1, 2 ** int(rng.integers(0, 5)))
        return modulus_consistent(objective, eps)

    def check_expiration(self, rng: np.random.Generator) -> Optional[str]:
        phi = random_formula(rng, 3)
        props = ('a', 'b')
        _, profile = event_form(phi, reserved=props)
        run = xdepth(phi) + 1
        horizon = int(rng.integers(run, max(run, 4) + 1))
        alphabet = Alphabet.powerset(props)
        events = profile.alphabet.symbols
        stream = tuple(_pick(rng, events) for _ in range(horizon - run)) + (profile.all_trigger,) * run
        w1 = random_lasso(rng, alphabet)
        shared = w1.unroll(horizon)
        tail = random_lasso(rng, alphabet)
        w2 = LassoWord(shared + tail.prefix, tail.cycle, alphabet)
        if not simultaneous_expiration_check(phi, horizon, stream, w1, w2, propositions=props):
            return f"{render(phi)} with H={horizon} on {format_lasso(w1)} / {format_lasso(w2)}"
        return None

    def check_partition(self, rng: np.random.Generator) -> Optional[str]:
        phi = random_formula(rng, 2, allow_next=False, max_expiring=2)
        _, profile = event_form(phi)
        horizon = int(rng.integers(0, 5))
        depth = int(rng.integers(0, 2))
        mass = sum((stream_probability(profile, stream) for stream in enumerate_streams(profile, horizon)
                    if has_resolving_run(profile, stream, depth + 1)), Fraction(0))
        expected = resolved_mass(profile, horizon, depth)
        if mass != expected:
            return f"{render(phi)}: enumerated {mass} != {expected} at H={horizon}"
        return None

    def check_planner(self, rng: np.random.Generator) -> Optional[str]:
        mdp = random_mdp(rng)
        horizon = int(rng.integers(1, 4))
        rewards = {pair: Fraction(int(rng.integers(0, 5)), 4) for pair in mdp.pairs}
        objective = finite_horizon_objective(mdp.pairs, horizon, rewards)
        lifted = LiftedMdp(mdp, truncate_objective(objective, Fraction(1, 4)))
        policy, value = exact_plan(lifted)
        if evaluate_policy(lifted, policy) != value:
            return f"planner value {value} differs from its policy's value"
        for _ in range(5):
            table = {history: _pick(rng, mdp.actions) for history in policy.table}
            if evaluate_policy(lifted, TablePolicy(mdp.actions, table)) > value:
                return f"random policy beats the planner's value {value}"
        return None

    def run_suite(self, name: str) -> Dict[str, Any]:
        """Run one suite; any exception marks the suite as errored."""
        check = self.suites[name]
        rng = np.random.default_rng([self.seed, list(self.suites).index(name)])
        failures: List[str] = []
        try:
            for _ in range(self.trials):
                failure = check(rng)
                if failure is not None:
                    failures.append(failure)
        except Exception as e:
            logger.error(f"Property suite {name} errored: {e}")
            return {'status': 'error', 'error': str(e), 'trials': self.trials}

        status = {'status': 'passed' if not failures else 'failed', 'trials': self.trials,
                  'failures': len(failures)}
        if failures:
            status['first_failure'] = failures[0]
            logger.warning(f"Property suite {name}: {len(failures)} failures, first: {failures[0]}")
        else:
            logger.info(f"Property suite {name} passed {self.trials} trials")
        return status

    def run_all(self, names: Optional[List[str]] = None) -> Dict[str, Any]:
        """Detailed status of every requested suite."""
        selected = names or list(self.suites)
        unknown = [name for name in selected if name not in self.suites]
        if unknown:
            raise ValidationError(f"Unknown property suites: {unknown}")
        checks = {name: self.run_suite(name) for name in selected}
        healthy = all(result['status'] == 'passed' for result in checks.values())
        return {
            'service': 'pac-objectives',
            'status': 'healthy' if healthy else 'unhealthy',
            'seed': self.seed,
            'checks': checks,
        }


def _single_prop_srm(rng: np.random.Generator):
    """Constructor arguments for a random SRM over the 2-letter alphabet 2^{a}."""
    states = tuple(f"u{i}" for i in range(int(rng.integers(1, 4))))
    alphabet = Alphabet.powerset(('a',))
    delta_u = {(state, letter): _pick(rng, states) for state in states for letter in alphabet}
    delta_r = {(source, target): Fraction(int(rng.integers(0, 3)), 2) for source in states for target in states}
    return states, ('a',), delta_u, delta_r, states[0], _pick(rng, (Fraction(1, 3), Fraction(1, 2)))


def random_single_prop_objective(rng: np.random.Generator, family: str) -> ComputableObjective:
    """Random objective of the given family over the 2-letter alphabet 2^{a}."""
    if family == 'srm':
        return srm_objective(SimpleRewardMachine(*_single_prop_srm(rng)))
    if family == 'ldba':
        return bozkurt_objective(random_ldba_spec(rng))
    if family == 'gltl':
        phi = random_formula(rng, 2, props=('a',), allow_next=False, max_expiring=1)
        return gltl_objective(phi, propositions=('a',))
    if family == 'discounted':
        alphabet = Alphabet.powerset(('a',))
        rewards = {letter: Fraction(int(rng.integers(-2, 3)), 2) for letter in alphabet}
        return discounted_objective(alphabet, _pick(rng, (Fraction(1, 3), Fraction(1, 2))), rewards)
    raise ValidationError(f"Unknown objective family {family!r}")
