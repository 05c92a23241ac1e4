"""
Temporal formula syntax trees shared by LTL and GLTL, and LTL satisfaction on lasso words.

A temporal node (G, F, U) carrying an expiration probability ``theta`` is a
GLTL expiring operator; with ``theta is None`` it is the plain LTL operator.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Tuple, Union

from errors import ValidationError
from foundations import LassoWord, format_rational

logger = logging.getLogger(__name__)

Span = Optional[Tuple[int, int]]


@dataclass(frozen=True)
class Atom:
    name: str
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not:
    operand: 'Formula'
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class And:
    left: 'Formula'
    right: 'Formula'
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Or:
    left: 'Formula'
    right: 'Formula'
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Next:
    operand: 'Formula'
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Globally:
    operand: 'Formula'
    theta: Optional[Fraction] = None
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Finally:
    operand: 'Formula'
    theta: Optional[Fraction] = None
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Until:
    left: 'Formula'
    right: 'Formula'
    theta: Optional[Fraction] = None
    span: Span = field(default=None, compare=False, repr=False)


Formula = Union[Atom, Not, And, Or, Next, Globally, Finally, Until]
TEMPORAL = (Globally, Finally, Until)


def children(phi: Formula) -> Tuple[Formula, ...]:
    if isinstance(phi, Atom):
        return ()
    if isinstance(phi, (Not, Next, Globally, Finally)):
        return (phi.operand,)
    return (phi.left, phi.right)


def subformulas(phi: Formula) -> Iterator[Formula]:
    """Preorder walk."""
    yield phi
    for child in children(phi):
        yield from subformulas(child)


def atoms(phi: Formula) -> Tuple[str, ...]:
    """Atom names in order of first occurrence."""
    return tuple(dict.fromkeys(node.name for node in subformulas(phi) if isinstance(node, Atom)))


def expiring_nodes(phi: Formula) -> List[Formula]:
    """Temporal nodes carrying a theta, in preorder."""
    return [node for node in subformulas(phi) if isinstance(node, TEMPORAL) and node.theta is not None]


def is_ltl(phi: Formula) -> bool:
    return not expiring_nodes(phi)


def xdepth(phi: Formula) -> int:
    """Maximum nesting depth of X."""
    below = max((xdepth(child) for child in children(phi)), default=0)
    return below + 1 if isinstance(phi, Next) else below


# --- rendering -----------------------------------------------------------

_OR, _AND, _UNTIL, _UNARY, _ATOM = range(1, 6)


def _level(phi: Formula) -> int:
    if isinstance(phi, Or):
        return _OR
    if isinstance(phi, And):
        return _AND
    if isinstance(phi, Until):
        return _UNTIL
    if isinstance(phi, Atom):
        return _ATOM
    return _UNARY


def _theta(theta: Optional[Fraction]) -> str:
    return '' if theta is None else f"[{format_rational(theta)}]"


def render(phi: Formula) -> str:
    """
    Concrete syntax for a formula, parenthesized only where precedence needs it.

    ``|`` and ``&`` associate to the left and ``U`` to the right, so
    ``parse(render(phi)) == phi``.
    """
    def wrap(child: Formula, needs_parens: bool) -> str:
        text = render(child)
        return f"({text})" if needs_parens else text

    if isinstance(phi, Atom):
        return phi.name
    if isinstance(phi, (Or, And)):
        level = _level(phi)
        symbol = '|' if isinstance(phi, Or) else '&'
        left = wrap(phi.left, _level(phi.left) < level)
        right = wrap(phi.right, _level(phi.right) <= level)
        return f"{left} {symbol} {right}"
    if isinstance(phi, Until):
        left = wrap(phi.left, _level(phi.left) <= _UNTIL)
        right = wrap(phi.right, _level(phi.right) < _UNTIL)
        return f"{left} U{_theta(phi.theta)} {right}"

    operand = wrap(phi.operand, _level(phi.operand) < _UNARY)
    if isinstance(phi, Not):
        return f"!{operand}"
    if isinstance(phi, Next):
        return f"X {operand}"
    prefix = 'G' if isinstance(phi, Globally) else 'F'
    return f"{prefix}{_theta(phi.theta)} {operand}"


# --- satisfaction on lasso words -----------------------------------------

def _fixpoint(word: LassoWord, local, start: bool) -> List[bool]:
    """
    Iterate ``sat[p] = local(p, sat[succ(p)])`` from all-``start`` until stable.

    Starting from all False gives the least fixpoint (U, F); all True the
    greatest (G).
    """
    positions = word.positions
    sat = [start] * positions
    changed = True
    while changed:
        changed = False
        for p in reversed(range(positions)):
            value = local(p, sat[word.successor(p)])
            if value != sat[p]:
                sat[p] = value
                changed = True
    return sat


def ltl_eval(psi: Formula, word: LassoWord) -> bool:
    """
    Decide ``word |= psi`` for an LTL formula on a lasso word.

    Every subformula is evaluated once on each of the |prefix| + |cycle|
    lasso positions; position p's successor is p + 1, with the end of the
    cycle folding back onto its start.

    Args:
        psi: LTL formula (no theta annotations)
        word: Lasso over a powerset alphabet covering psi's atoms

    Returns:
        Satisfaction at position 0
    """
    if not is_ltl(psi):
        raise ValidationError(f"Formula {render(psi)} still carries expiration probabilities")
    props = word.alphabet.propositions
    if props is None:
        raise ValidationError("LTL words must be over a powerset alphabet")
    unknown = [name for name in atoms(psi) if name not in props]
    if unknown:
        raise ValidationError(f"Unknown atoms {unknown} for propositions {list(props)}")

    letters = [word.letter(p) for p in range(word.positions)]
    table: Dict[Formula, List[bool]] = {}

    def sat(phi: Formula) -> List[bool]:
        cached = table.get(phi)
        if cached is not None:
            return cached
        if isinstance(phi, Atom):
            result = [phi.name in letter for letter in letters]
        elif isinstance(phi, Not):
            result = [not value for value in sat(phi.operand)]
        elif isinstance(phi, And):
            left, right = sat(phi.left), sat(phi.right)
            result = [a and b for a, b in zip(left, right)]
        elif isinstance(phi, Or):
            left, right = sat(phi.left), sat(phi.right)
            result = [a or b for a, b in zip(left, right)]
        elif isinstance(phi, Next):
            inner = sat(phi.operand)
            result = [inner[word.successor(p)] for p in range(word.positions)]
        elif isinstance(phi, Until):
            left, right = sat(phi.left), sat(phi.right)
            result = _fixpoint(word, lambda p, later: right[p] or (left[p] and later), False)
        elif isinstance(phi, Finally):
            inner = sat(phi.operand)
            result = _fixpoint(word, lambda p, later: inner[p] or later, False)
        elif isinstance(phi, Globally):
            inner = sat(phi.operand)
            result = _fixpoint(word, lambda p, later: inner[p] and later, True)
        else:
            raise ValidationError(f"Not a formula node: {phi!r}")
        table[phi] = result
        return result

    return sat(psi)[0]
