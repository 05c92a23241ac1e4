"""
GLTL: temporal logic with expiring operators.

Each expiring G/F/U node owns a fresh event proposition that triggers
independently with probability theta at every step. ``event_form`` rewrites a
GLTL formula into an LTL formula over the original propositions plus the
events; the objective is the probability, over event streams, that the
merged word satisfies it.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence, Tuple

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from config import config
from errors import BudgetExceeded, ParseError, ValidationError
from foundations import (EMPTY_LETTER, Alphabet, Letter, LassoWord, PowersetAlphabet,
                         common_prefix_length)
from ltl import (TEMPORAL, And, Atom, Finally, Formula, Globally, Next, Not, Or, Until, atoms,
                 ltl_eval, render, subformulas, xdepth)
from objective_core import ComputableObjective, Word, smallest_power_at_most

logger = logging.getLogger(__name__)

FORMULA_GRAMMAR = r'''
?start: disjunction

?disjunction: conjunction
    | disjunction "|" conjunction       -> or_

?conjunction: until
    | conjunction "&" until             -> and_

?until: unary
    | unary "U" [THETA] until           -> until

?unary: "!" unary                       -> not_
    | "X" unary                         -> next_
    | "G" [THETA] unary                 -> always
    | "F" [THETA] unary                 -> eventually
    | NAME                              -> atom
    | "(" disjunction ")"

NAME.2: /(?![XGFU](?![A-Za-z0-9_]))[A-Za-z_][A-Za-z0-9_]*/
THETA: /\[[^\]]*\]/
COMMENT: /#[^\n]*/

%import common.WS
%ignore WS
%ignore COMMENT
'''

_PARSER = Lark(FORMULA_GRAMMAR, parser='lalr', propagate_positions=True, maybe_placeholders=True)


def _span(meta) -> Optional[Tuple[int, int]]:
    if getattr(meta, 'empty', True):
        return None
    return meta.start_pos, meta.end_pos


@v_args(meta=True)
class _FormulaBuilder(Transformer):
    """Turns the parse tree into formula nodes, enforcing the theta policy."""

    def __init__(self, expiring: bool):
        super().__init__()
        self.expiring = expiring

    def _theta(self, token, meta) -> Optional[Fraction]:
        position = meta.start_pos if not getattr(meta, 'empty', True) else None
        if token is None:
            if self.expiring:
                raise ParseError("Temporal operator needs an expiration probability [p/q]", position=position)
            return None
        if not self.expiring:
            raise ParseError("LTL operators take no expiration probability", position=token.start_pos)
        body = str(token)[1:-1].strip()
        try:
            theta = Fraction(body)
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"Invalid expiration probability {body!r}", position=token.start_pos)
        if not 0 < theta < 1:
            raise ParseError(f"Expiration probability must lie in (0, 1), got {theta}", position=token.start_pos)
        return theta

    def atom(self, meta, children):
        return Atom(str(children[0]), span=_span(meta))

    def not_(self, meta, children):
        return Not(children[0], span=_span(meta))

    def next_(self, meta, children):
        return Next(children[0], span=_span(meta))

    def and_(self, meta, children):
        return And(children[0], children[1], span=_span(meta))

    def or_(self, meta, children):
        return Or(children[0], children[1], span=_span(meta))

    def always(self, meta, children):
        theta, operand = children
        return Globally(operand, self._theta(theta, meta), span=_span(meta))

    def eventually(self, meta, children):
        theta, operand = children
        return Finally(operand, self._theta(theta, meta), span=_span(meta))

    def until(self, meta, children):
        left, theta, right = children
        return Until(left, right, self._theta(theta, meta), span=_span(meta))


def _parse(text: str, expiring: bool) -> Formula:
    try:
        tree = _PARSER.parse(text)
    except UnexpectedInput as e:
        position = getattr(e, 'pos_in_stream', None)
        line = getattr(e, 'line', None)
        column = getattr(e, 'column', None)
        if position is not None and position < 0:
            position, line, column = len(text), None, None
        raise ParseError(f"Syntax error in formula {text.strip()!r}", position=position,
                         line=line if line and line > 0 else None,
                         column=column if column and column > 0 else None)

    try:
        return _FormulaBuilder(expiring).transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ParseError):
            raise e.orig_exc
        raise


def parse_gltl(text: str) -> Formula:
    """
    Parse a GLTL formula.

    Atoms are identifiers other than the bare operator letters X, G, F and U.
    Every G, F and U carries ``[p/q]`` with 0 < p/q < 1. From loosest to
    tightest: ``|``, ``&``, ``U[..]`` (right-associative), then the prefix
    operators ``!``, ``X``, ``G[..]`` and ``F[..]``.

    Args:
        text: Formula text; ``#`` starts a comment

    Returns:
        Formula tree with exact thetas and source spans
    """
    return _parse(text, expiring=True)


def parse_ltl(text: str) -> Formula:
    """Parse a plain LTL formula: same syntax with no ``[p/q]`` annotations."""
    return _parse(text, expiring=False)


@dataclass(frozen=True)
class EventProfile:
    """Expiration events in preorder of their nodes and their per-step trigger probabilities."""

    events: Tuple[str, ...]
    thetas: Tuple[Fraction, ...]
    alphabet: PowersetAlphabet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.events) != len(self.thetas):
            raise ValidationError("Every event needs exactly one theta")
        object.__setattr__(self, 'thetas', tuple(Fraction(theta) for theta in self.thetas))
        object.__setattr__(self, 'alphabet', Alphabet.powerset(self.events))

    def theta(self, event: str) -> Fraction:
        try:
            return self.thetas[self.events.index(event)]
        except ValueError:
            raise ValidationError(f"Unknown event {event!r}")

    @property
    def joint(self) -> Fraction:
        """Probability that every event triggers at one step."""
        product = Fraction(1)
        for theta in self.thetas:
            product *= theta
        return product

    @property
    def all_trigger(self) -> Letter:
        return frozenset(self.events)

    def letter_probability(self, letter: Letter) -> Fraction:
        probability = Fraction(1)
        for event, theta in zip(self.events, self.thetas):
            probability *= theta if event in letter else 1 - theta
        return probability


def event_form(phi: Formula, reserved: Sequence[str] = ()) -> Tuple[Formula, EventProfile]:
    """
    Rewrite expiring operators into LTL over fresh event propositions.

    G[t] p becomes T(p) U (T(p) & e), F[t] p becomes !e U T(p), and
    p U[t] q becomes (T(p) & !e) U T(q); every other node is rewritten
    structurally. Events are named ``e0, e1, ...`` in preorder, with ``_``
    appended while a name clashes with an atom or a reserved name.

    Args:
        phi: GLTL formula
        reserved: Further names the events must avoid

    Returns:
        (LTL formula, EventProfile)
    """
    taken = set(atoms(phi)) | set(reserved)
    events: list = []
    thetas: list = []

    def fresh(theta: Fraction) -> Atom:
        name = f"e{len(events)}"
        while name in taken:
            name += '_'
        taken.add(name)
        events.append(name)
        thetas.append(theta)
        return Atom(name)

    def translate(node: Formula) -> Formula:
        if isinstance(node, Atom):
            return node
        if isinstance(node, TEMPORAL) and node.theta is not None:
            event = fresh(node.theta)
            if isinstance(node, Globally):
                body = translate(node.operand)
                return Until(body, And(body, event))
            if isinstance(node, Finally):
                return Until(Not(event), translate(node.operand))
            return Until(And(translate(node.left), Not(event)), translate(node.right))
        if isinstance(node, Not):
            return Not(translate(node.operand))
        if isinstance(node, Next):
            return Next(translate(node.operand))
        if isinstance(node, And):
            return And(translate(node.left), translate(node.right))
        if isinstance(node, Or):
            return Or(translate(node.left), translate(node.right))
        if isinstance(node, Globally):
            return Globally(translate(node.operand))
        if isinstance(node, Finally):
            return Finally(translate(node.operand))
        return Until(translate(node.left), translate(node.right))

    psi = translate(phi)
    return psi, EventProfile(tuple(events), tuple(thetas))


def enumerate_streams(profile: EventProfile, horizon: int) -> Iterator[Tuple[Letter, ...]]:
    """All event streams of the given length, in canonical order."""
    return itertools.product(profile.alphabet.symbols, repeat=horizon)


def stream_probability(profile: EventProfile, stream: Sequence[Letter]) -> Fraction:
    probability = Fraction(1)
    for letter in stream:
        probability *= profile.letter_probability(letter)
    return probability


def has_resolving_run(profile: EventProfile, stream: Sequence[Letter], run: int) -> bool:
    """True when some ``run`` consecutive steps of the stream trigger every event."""
    everything = profile.all_trigger
    streak = 0
    for letter in stream:
        streak = streak + 1 if letter == everything else 0
        if streak >= run:
            return True
    return False


def resolved_mass(profile: EventProfile, horizon: int, depth: int = 0) -> Fraction:
    """
    Probability that a random stream of length ``horizon`` contains ``depth + 1``
    consecutive all-trigger steps. For ``depth == 0`` this is 1 - (1 - joint)^horizon.
    """
    run = depth + 1
    joint = profile.joint
    pending = [Fraction(1)] + [Fraction(0)] * depth  # mass by current streak, unresolved
    for _ in range(horizon):
        following = [Fraction(0)] * run
        for streak, mass in enumerate(pending):
            if not mass:
                continue
            following[0] += mass * (1 - joint)
            if streak + 1 < run:
                following[streak + 1] += mass * joint
        pending = following
    return 1 - sum(pending)


def merge_events(prefix: Sequence[Letter], stream: Sequence[Letter], alphabet: PowersetAlphabet) -> LassoWord:
    """
    The lasso ``(prefix ⊎ stream) . {}^omega``.

    Letter i of the prefix is joined with stream letter i where the stream
    has one; the prefix must be at least as long as the stream.
    """
    if len(stream) > len(prefix):
        raise ValidationError(f"Stream of length {len(stream)} is longer than the prefix ({len(prefix)})")
    letters = tuple(
        letter | stream[i] if i < len(stream) else letter
        for i, letter in enumerate(prefix)
    )
    return LassoWord(letters, (EMPTY_LETTER,), alphabet)


def merge_lasso_events(word: LassoWord, stream: Sequence[Letter], alphabet: PowersetAlphabet) -> LassoWord:
    """The whole lasso joined with the stream; no event triggers after the stream ends."""
    length = max(len(stream), len(word.prefix))
    prefix = tuple(
        word.letter(i) | (stream[i] if i < len(stream) else EMPTY_LETTER)
        for i in range(length)
    )
    cycle = tuple(word.letter(i) for i in range(length, length + len(word.cycle)))
    return LassoWord(prefix, cycle, alphabet)


def _propositions(phi: Formula, propositions: Optional[Sequence[str]]) -> Tuple[str, ...]:
    if propositions is None:
        return tuple(sorted(atoms(phi)))
    props = tuple(propositions)
    missing = [name for name in atoms(phi) if name not in props]
    if missing:
        raise ValidationError(f"Formula atoms {missing} are not among the propositions {list(props)}")
    return props


def gltl_horizon(profile: EventProfile, depth: int, n: int) -> int:
    """
    Steps after which unresolved streams carry at most 2^-n probability.

    A stream resolves once every event triggers on ``depth + 1`` consecutive
    steps. H = (depth + 1) * k with k the least natural such that
    (1 - joint^(depth+1))^k <= 2^-n; without events H = depth + 1.
    """
    run = depth + 1
    if not profile.events:
        return run
    miss = 1 - profile.joint ** run
    return run * smallest_power_at_most(miss, Fraction(1, 2 ** n))


def gltl_objective(phi: Formula, propositions: Optional[Sequence[str]] = None,
                   budget: Optional[int] = None) -> ComputableObjective:
    """
    Satisfaction probability of a GLTL formula as a computable objective.

    approx(w, n) sums the probability of every length-H event stream that
    contains a resolving run and whose merge with the first H letters of w,
    continued by {}^omega, satisfies the event form. After a resolving run
    the rest of the stream cannot change the verdict, so the enumeration
    stops branching there and credits the whole cylinder at once.

    Args:
        phi: GLTL formula
        propositions: Alphabet propositions (defaults to the formula's atoms, sorted)
        budget: Cap on (2^|events|)^H (defaults to the configured enumeration budget)

    Returns:
        ComputableObjective over 2^Pi with values in [0, 1]
    """
    plain = [render(node) for node in _plain_temporal(phi)]
    if plain:
        raise ValidationError(f"GLTL objective needs expiring operators, found plain {plain}")

    props = _propositions(phi, propositions)
    psi, profile = event_form(phi, reserved=props)
    merged_alphabet = Alphabet.powerset(props + profile.events)
    depth = xdepth(phi)
    run = depth + 1
    cap = budget if budget is not None else config.enumeration_budget
    everything = profile.all_trigger
    logger.debug(f"GLTL event form {render(psi)} with events {list(profile.events)}")

    def approx(word: Word, n: int) -> Fraction:
        horizon = gltl_horizon(profile, depth, n)
        size = len(profile.alphabet) ** horizon
        if size > cap:
            raise BudgetExceeded('GLTL event-stream enumeration', cap, required=size, last_horizon=horizon)
        letters = [word[i] for i in range(horizon)]
        if not profile.events:
            return Fraction(1) if ltl_eval(psi, merge_events(letters, (), merged_alphabet)) else Fraction(0)

        def accepted_mass(stream: Tuple[Letter, ...], probability: Fraction, streak: int) -> Fraction:
            if streak == run:
                filled = stream + (everything,) * (horizon - len(stream))
                accepted = ltl_eval(psi, merge_events(letters, filled, merged_alphabet))
                return probability if accepted else Fraction(0)
            if len(stream) == horizon:
                return Fraction(0)
            total = Fraction(0)
            for letter in profile.alphabet.symbols:
                total += accepted_mass(stream + (letter,), probability * profile.letter_probability(letter),
                                       streak + 1 if letter == everything else 0)
            return total

        logger.debug(f"GLTL approximation n={n}, H={horizon}")
        return accepted_mass((), Fraction(1), 0)

    return ComputableObjective(
        alphabet=Alphabet.powerset(props),
        approx_fn=approx,
        value_bound=Fraction(1),
        horizon_fn=lambda n: gltl_horizon(profile, depth, n),
        name='gltl',
    )


def _plain_temporal(phi: Formula) -> list:
    return [node for node in subformulas(phi) if isinstance(node, TEMPORAL) and node.theta is None]


def simultaneous_expiration_check(phi: Formula, horizon: int, stream: Sequence[Letter],
                                  w1: LassoWord, w2: LassoWord,
                                  propositions: Optional[Sequence[str]] = None) -> bool:
    """
    Whether two words sharing their first H letters get the same verdict
    under a stream whose last xdepth(phi) + 1 steps trigger every event.

    Args:
        phi: GLTL formula
        horizon: H
        stream: Event stream of length H over the formula's events
        w1: First word
        w2: Second word, equal to w1 on the first H letters
        propositions: Alphabet propositions (defaults to the formula's atoms, sorted)

    Returns:
        True when both merged words agree on the event form
    """
    props = _propositions(phi, propositions)
    psi, profile = event_form(phi, reserved=props)
    run = xdepth(phi) + 1
    stream = tuple(stream)
    if len(stream) != horizon:
        raise ValidationError(f"Stream has length {len(stream)}, expected {horizon}")
    if horizon < run:
        raise ValidationError(f"Horizon {horizon} is shorter than the resolving run ({run})")
    if any(letter != profile.all_trigger for letter in stream[horizon - run:]):
        raise ValidationError(f"The last {run} stream steps must trigger every event")
    if any(letter not in profile.alphabet for letter in stream):
        raise ValidationError(f"Stream letters must be sets of {list(profile.events)}")
    if common_prefix_length(w1, w2, horizon) < horizon:
        raise ValidationError(f"Words differ within the first {horizon} letters")

    merged_alphabet = Alphabet.powerset(props + profile.events)
    first = ltl_eval(psi, merge_lasso_events(w1, stream, merged_alphabet))
    second = ltl_eval(psi, merge_lasso_events(w2, stream, merged_alphabet))
    if first != second:
        logger.warning(f"Expiration check failed for {render(phi)} at H={horizon}")
    return first == second
