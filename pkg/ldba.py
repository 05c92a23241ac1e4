"""
Limit-deterministic Buchi automata and the discounted LTL-in-the-limit objective.

The agent resolves the automaton's nondeterminism by choosing, at every step,
either one of the epsilon labels available in the current state or the
environment letter (``BOT``). The objective is the best discounted
acceptance reward over all such choice sequences.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from config import config
from errors import BudgetExceeded, ParseError, ValidationError
from foundations import (Alphabet, Letter, PowersetAlphabet, iter_directives, parse_keyword_value,
                         parse_rational, resolve_wildcards)
from objective_core import ComputableObjective, Word, smallest_power_at_most

logger = logging.getLogger(__name__)

BOT = None  # "take the environment letter"


@dataclass(frozen=True)
class Ldba:
    """
    LDBA with an initial component, an accepting component and named epsilon moves.

    Letter transitions are deterministic and total; each epsilon label leads
    to at most one state. Epsilon moves only leave the initial component.
    """

    initial_component: Tuple[str, ...]
    accepting_component: Tuple[str, ...]
    propositions: Tuple[str, ...]
    letter_trans: Mapping[Tuple[str, Letter], str]
    eps_trans: Mapping[Tuple[str, str], str]
    initial: str
    accepting: FrozenSet[str]
    eps_labels: Tuple[str, ...] = ()
    alphabet: PowersetAlphabet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'accepting', frozenset(self.accepting))
        object.__setattr__(self, 'alphabet', Alphabet.powerset(self.propositions))
        if not self.eps_labels:
            labels = tuple(dict.fromkeys(label for _, label in self.eps_trans))
            object.__setattr__(self, 'eps_labels', labels)

        states = self.states
        if len(set(states)) != len(states):
            raise ValidationError(f"States must be distinct and the components disjoint: {list(states)}")
        if not states:
            raise ValidationError("LDBA needs at least one state")
        if self.initial not in states:
            raise ValidationError(f"Initial state {self.initial!r} is not declared")

        component_b = set(self.accepting_component)
        outside = self.accepting - component_b
        if outside:
            raise ValidationError(f"Accepting states {sorted(outside)} lie outside the accepting component")

        for state in states:
            for letter in self.alphabet:
                target = self.letter_trans.get((state, letter))
                if target is None:
                    raise ValidationError(f"No letter transition from {state} on {sorted(letter)}")
                if target not in states:
                    raise ValidationError(f"Transition from {state} targets unknown state {target!r}")
                if state in component_b and target not in component_b:
                    raise ValidationError(f"Letter transition {state} -> {target} leaves the accepting component")

        for (state, label), target in self.eps_trans.items():
            if label not in self.eps_labels:
                raise ValidationError(f"Undeclared epsilon label {label!r}")
            if state not in states or target not in states:
                raise ValidationError(f"Epsilon move {label}: {state} -> {target} uses an unknown state")
            if state in component_b:
                raise ValidationError(f"Epsilon move {label} leaves accepting-component state {state}")

    @property
    def states(self) -> Tuple[str, ...]:
        return self.initial_component + self.accepting_component

    def step_letter(self, state: str, letter: Letter) -> str:
        try:
            return self.letter_trans[(state, letter)]
        except (KeyError, TypeError):
            raise ValidationError(f"Letter {letter!r} is not a valuation of {list(self.propositions)}")

    def eps_target(self, state: str, label: Optional[str]) -> Optional[str]:
        if label is BOT:
            return None
        return self.eps_trans.get((state, label))

    def available_eps(self, state: str) -> Tuple[str, ...]:
        return tuple(label for label in self.eps_labels if (state, label) in self.eps_trans)


@dataclass(frozen=True)
class BozkurtSpec:
    """An LDBA with its two discount hyper-parameters."""

    ldba: Ldba
    gamma1: Fraction
    gamma2: Fraction

    def __post_init__(self):
        object.__setattr__(self, 'gamma1', Fraction(self.gamma1))
        object.__setattr__(self, 'gamma2', Fraction(self.gamma2))
        for name in ('gamma1', 'gamma2'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValidationError(f"{name} must lie in (0, 1), got {value}")

    @property
    def gamma_max(self) -> Fraction:
        return max(self.gamma1, self.gamma2)

    def reward(self, state: str) -> Fraction:
        return 1 - self.gamma1 if state in self.ldba.accepting else Fraction(0)

    def discount(self, state: str) -> Fraction:
        return self.gamma1 if state in self.ldba.accepting else self.gamma2


def bozkurt_helper(spec: BozkurtSpec, horizon: int, w_e: Sequence[Optional[str]], word: Word) -> Fraction:
    """
    Discounted acceptance reward of one resolution of the nondeterminism.

    At step k in state u the reward R(u) is added under the running product of
    per-state discounts, then the automaton moves along ``w_e[k]`` when that
    epsilon label is available in u, and along the next unread environment
    letter otherwise.

    Args:
        spec: Automaton and discounts
        horizon: Number of steps H
        w_e: Choice sequence of length H over the epsilon labels and BOT
        word: Environment word

    Returns:
        The truncated sum over the first H steps
    """
    if len(w_e) != horizon:
        raise ValidationError(f"Choice sequence has length {len(w_e)}, expected {horizon}")
    ldba = spec.ldba
    state = ldba.initial
    cursor = 0
    value = Fraction(0)
    discount = Fraction(1)
    for k in range(horizon):
        value += discount * spec.reward(state)
        discount *= spec.discount(state)
        target = ldba.eps_target(state, w_e[k])
        if target is None:
            target = ldba.step_letter(state, word[cursor])
            cursor += 1
        state = target
    return value


def bozkurt_horizon(spec: BozkurtSpec, n: int) -> int:
    """H = 1 + k with k the smallest natural such that gamma_max^k <= (1 - gamma_max) * 2^-n."""
    gamma = spec.gamma_max
    return 1 + smallest_power_at_most(gamma, (1 - gamma) / 2 ** n)


def _best_resolution(spec: BozkurtSpec, horizon: int, word: Word) -> Fraction:
    # An unavailable epsilon label behaves exactly like BOT, so only available
    # labels are branched on. A subtree's value scales with the discount
    # accumulated above it, so it is tabulated per (step, state, cursor) at
    # discount 1.
    ldba = spec.ldba
    if horizon == 0:
        return Fraction(0)

    levels: List[Dict[Tuple[str, int], List[Tuple[str, int]]]] = []
    frontier = {(ldba.initial, 0)}
    for _ in range(horizon):
        moves = {}
        for state, cursor in sorted(frontier):
            successors = [(ldba.step_letter(state, word[cursor]), cursor + 1)]
            successors += [(ldba.eps_trans[(state, label)], cursor) for label in ldba.available_eps(state)]
            moves[(state, cursor)] = successors
        levels.append(moves)
        frontier = {node for successors in moves.values() for node in successors}

    below: Dict[Tuple[str, int], Fraction] = {}
    for moves in reversed(levels):
        here = {}
        for (state, cursor), successors in moves.items():
            best = max(below.get(node, Fraction(0)) for node in successors)
            here[(state, cursor)] = spec.reward(state) + spec.discount(state) * best
        below = here
    return below[(ldba.initial, 0)]


def bozkurt_objective(spec: BozkurtSpec, budget: Optional[int] = None) -> ComputableObjective:
    """
    Objective max over choice sequences of the truncated discounted acceptance reward.

    Args:
        spec: Automaton and discounts
        budget: Cap on (|E|+1)^H (defaults to the configured enumeration budget)

    Returns:
        ComputableObjective over 2^Pi with values in [0, (1-gamma1)/(1-gamma_max)]
    """
    cap = budget if budget is not None else config.enumeration_budget
    branching = len(spec.ldba.eps_labels) + 1

    def approx(word: Word, n: int) -> Fraction:
        horizon = bozkurt_horizon(spec, n)
        size = branching ** horizon
        if size > cap:
            raise BudgetExceeded('LDBA choice enumeration', cap, required=size, last_horizon=horizon)
        logger.debug(f"LDBA approximation n={n}, H={horizon}, {size} choice sequences")
        return _best_resolution(spec, horizon, word)

    return ComputableObjective(
        alphabet=spec.ldba.alphabet,
        approx_fn=approx,
        value_bound=(1 - spec.gamma1) / (1 - spec.gamma_max),
        horizon_fn=lambda n: bozkurt_horizon(spec, n),
        name='ldba',
    )


def parse_ldba(text: str) -> BozkurtSpec:
    """
    Parse the line-based LDBA format.

    ``ldba gamma1=.. gamma2=..``, ``props ...``, ``states <initial> | <accepting>``,
    ``init u``, ``accept ...``, ``eps <label> <u> -> <v>`` and
    ``trans <state|*> <letter|*> <target|self>`` lines.
    """
    gammas: Dict[str, Fraction] = {}
    props: Tuple[str, ...] = ()
    component_i: Tuple[str, ...] = ()
    component_b: Tuple[str, ...] = ()
    have_states = False
    initial = None
    accepting: set = set()
    eps_trans: Dict[Tuple[str, str], str] = {}
    eps_labels: list = []
    rules = []

    for line, tokens in iter_directives(text):
        keyword, args = tokens[0], tokens[1:]
        if keyword == 'ldba':
            if len(args) != 2:
                raise ParseError("Expected 'ldba gamma1=<rational> gamma2=<rational>'", line=line)
            gammas['gamma1'] = parse_rational(parse_keyword_value(args[0], 'gamma1', line))
            gammas['gamma2'] = parse_rational(parse_keyword_value(args[1], 'gamma2', line))
        elif keyword == 'props':
            props = tuple(args)
        elif keyword == 'states':
            if args.count('|') > 1:
                raise ParseError("At most one '|' may split the state list", line=line)
            if '|' in args:
                split = args.index('|')
                component_i, component_b = tuple(args[:split]), tuple(args[split + 1:])
            else:
                component_i, component_b = tuple(args), ()
            have_states = True
        elif keyword == 'init':
            if len(args) != 1:
                raise ParseError("Expected 'init <state>'", line=line)
            initial = args[0]
        elif keyword == 'accept':
            accepting.update(args)
        elif keyword == 'eps':
            if len(args) != 4 or args[2] != '->':
                raise ParseError("Expected 'eps <label> <source> -> <target>'", line=line)
            label, source, target = args[0], args[1], args[3]
            if (source, label) in eps_trans:
                raise ParseError(f"Epsilon label {label} already leaves {source}", line=line)
            eps_trans[(source, label)] = target
            if label not in eps_labels:
                eps_labels.append(label)
        elif keyword == 'trans':
            if len(args) != 3:
                raise ParseError("Expected 'trans <state> <letter> <target>'", line=line)
            rules.append((line, args[0], args[1], (args[2], line)))
        else:
            raise ParseError(f"Unknown directive {keyword!r}", line=line)

    if len(gammas) != 2:
        raise ParseError("Missing 'ldba gamma1=... gamma2=...' header")
    if not have_states:
        raise ParseError("Missing 'states' line")
    if initial is None:
        raise ParseError("Missing 'init' line")

    states = component_i + component_b
    table = resolve_wildcards(rules, states, Alphabet.powerset(props))
    letter_trans = {}
    for (state, letter), (target_token, line) in table.items():
        target = state if target_token == 'self' else target_token
        if target not in states:
            raise ParseError(f"Unknown target state {target!r}", line=line)
        letter_trans[(state, letter)] = target

    ldba = Ldba(component_i, component_b, props, letter_trans, eps_trans, initial,
                frozenset(accepting), tuple(eps_labels))
    spec = BozkurtSpec(ldba, gammas['gamma1'], gammas['gamma2'])
    logger.info(f"Loaded LDBA with {len(states)} states and {len(eps_labels)} epsilon labels")
    return spec
