"""
Simple reward machines and their discounted-sum objective.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Mapping, Tuple

from errors import ParseError, ValidationError
from foundations import (Alphabet, Letter, LassoWord, PowersetAlphabet, iter_directives,
                         parse_keyword_value, parse_rational, resolve_wildcards)
from objective_core import ComputableObjective, Word, smallest_power_at_most

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimpleRewardMachine:
    """Finite machine over proposition valuations whose transitions carry rewards."""

    states: Tuple[str, ...]
    propositions: Tuple[str, ...]
    delta_u: Mapping[Tuple[str, Letter], str]
    delta_r: Mapping[Tuple[str, str], Fraction]
    initial: str
    gamma: Fraction
    alphabet: PowersetAlphabet = field(init=False, repr=False, compare=False)
    r_max: Fraction = field(init=False, repr=False, compare=False)
    sinks: FrozenSet[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'gamma', Fraction(self.gamma))
        object.__setattr__(self, 'alphabet', Alphabet.powerset(self.propositions))
        if not 0 < self.gamma < 1:
            raise ValidationError(f"Discount must lie in (0, 1), got {self.gamma}")
        if len(set(self.states)) != len(self.states) or not self.states:
            raise ValidationError(f"States must be distinct and non-empty: {list(self.states)}")
        if self.initial not in self.states:
            raise ValidationError(f"Initial state {self.initial!r} is not declared")

        for state in self.states:
            for letter in self.alphabet:
                target = self.delta_u.get((state, letter))
                if target is None:
                    raise ValidationError(f"No transition from {state} on {sorted(letter)}")
                if target not in self.states:
                    raise ValidationError(f"Transition from {state} targets unknown state {target!r}")
        for (source, target), reward in self.delta_r.items():
            if source not in self.states or target not in self.states:
                raise ValidationError(f"Reward declared for unknown pair ({source}, {target})")

        r_max = max((abs(Fraction(reward)) for reward in self.delta_r.values()), default=Fraction(0))
        object.__setattr__(self, 'r_max', r_max)
        object.__setattr__(self, 'sinks', frozenset(
            state for state in self.states
            if self.reward(state, state) == 0
            and all(self.delta_u[(state, letter)] == state for letter in self.alphabet)
        ))

    def reward(self, source: str, target: str) -> Fraction:
        return Fraction(self.delta_r.get((source, target), 0))

    def step(self, state: str, letter: Letter) -> str:
        try:
            return self.delta_u[(state, letter)]
        except (KeyError, TypeError):
            raise ValidationError(f"Letter {letter!r} is not a valuation of {list(self.propositions)}")


def srm_horizon(machine: SimpleRewardMachine, n: int) -> int:
    """Smallest H with r_max * gamma^H / (1 - gamma) <= 2^-n."""
    if machine.r_max == 0:
        return 0
    bound = (1 - machine.gamma) / (machine.r_max * 2 ** n)
    return smallest_power_at_most(machine.gamma, bound)


def _partial_sum(machine: SimpleRewardMachine, word: Word, steps: int) -> Fraction:
    state = machine.initial
    value = Fraction(0)
    discount = Fraction(1)
    for k in range(steps):
        if state in machine.sinks:
            break
        nxt = machine.step(state, word[k])
        value += discount * machine.reward(state, nxt)
        discount *= machine.gamma
        state = nxt
    return value


def srm_objective(machine: SimpleRewardMachine) -> ComputableObjective:
    """
    Objective sum_k gamma^k * delta_r(u_k, u_{k+1}) of a simple reward machine.

    The discount exponent starts at 0 on the first transition. The run stops
    reading letters once it enters an absorbing zero-reward state.

    Args:
        machine: Reward machine

    Returns:
        ComputableObjective over 2^Pi
    """
    def approx(word: Word, n: int) -> Fraction:
        horizon = srm_horizon(machine, n)
        logger.debug(f"SRM approximation n={n}, H={horizon}")
        return _partial_sum(machine, word, horizon)

    return ComputableObjective(
        alphabet=machine.alphabet,
        approx_fn=approx,
        value_bound=machine.r_max / (1 - machine.gamma),
        horizon_fn=lambda n: srm_horizon(machine, n),
        name='srm',
    )


def srm_brute_oracle(machine: SimpleRewardMachine, word: LassoWord, depth: int) -> Tuple[Fraction, Fraction]:
    """
    Partial sum to ``depth`` and that sum plus the worst-case tail.

    Args:
        machine: Reward machine
        word: Input word
        depth: Number of transitions to sum, >= 1

    Returns:
        (lower, upper) where the true value lies in [lower - tail, upper]
    """
    if depth < 1:
        raise ValidationError(f"Oracle depth must be at least 1, got {depth}")
    lower = _partial_sum(machine, word, depth)
    tail = machine.r_max * machine.gamma ** depth / (1 - machine.gamma)
    return lower, lower + tail


def parse_srm(text: str) -> SimpleRewardMachine:
    """
    Parse the line-based SRM format.

    ``srm gamma=p/q``, ``props ...``, ``states ...``, ``init u`` and one
    ``trans <state|*> <letter|*> <target|self> <reward>`` line per covered
    (state, letter) pair. Wildcard rules fill the pairs no explicit rule names.
    """
    gamma = None
    props: Tuple[str, ...] = ()
    states: Tuple[str, ...] = ()
    initial = None
    rules = []

    for line, tokens in iter_directives(text):
        keyword, args = tokens[0], tokens[1:]
        if keyword == 'srm':
            if len(args) != 1:
                raise ParseError("Expected 'srm gamma=<rational>'", line=line)
            gamma = parse_rational(parse_keyword_value(args[0], 'gamma', line))
        elif keyword == 'props':
            props = tuple(args)
        elif keyword == 'states':
            states = tuple(args)
        elif keyword == 'init':
            if len(args) != 1:
                raise ParseError("Expected 'init <state>'", line=line)
            initial = args[0]
        elif keyword == 'trans':
            if len(args) != 4:
                raise ParseError("Expected 'trans <state> <letter> <target> <reward>'", line=line)
            rules.append((line, args[0], args[1], (args[2], parse_rational(args[3]), line)))
        else:
            raise ParseError(f"Unknown directive {keyword!r}", line=line)

    if gamma is None:
        raise ParseError("Missing 'srm gamma=...' header")
    if not states:
        raise ParseError("Missing 'states' line")
    if initial is None:
        raise ParseError("Missing 'init' line")

    alphabet = Alphabet.powerset(props)
    table = resolve_wildcards(rules, states, alphabet)

    delta_u: Dict[Tuple[str, Letter], str] = {}
    delta_r: Dict[Tuple[str, str], Fraction] = {}
    for (state, letter), (target_token, reward, line) in table.items():
        target = state if target_token == 'self' else target_token
        if target not in states:
            raise ParseError(f"Unknown target state {target!r}", line=line)
        delta_u[(state, letter)] = target
        previous = delta_r.get((state, target))
        if previous is not None and previous != reward:
            raise ParseError(f"Reward for ({state}, {target}) is both {previous} and {reward}", line=line)
        delta_r[(state, target)] = reward

    machine = SimpleRewardMachine(states, props, delta_u, delta_r, initial, gamma)
    logger.info(f"Loaded SRM with {len(states)} states over {list(props)}, gamma={gamma}")
    return machine
