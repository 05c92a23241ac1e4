"""
Foundations: exact rationals, finite alphabets, lasso words and bounded probes.

Every infinite word handled by the toolkit is an ultimately periodic
``prefix . cycle^omega`` lasso. Objectives read words only through integer
indexing, which lets a ``BoundedProbe`` stand in for any word and record (or
cap) how deep a computation looked.
"""

import itertools
import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Any, Hashable, Iterable, Iterator, Optional, Sequence, Tuple

from errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

Symbol = Hashable
Letter = frozenset

EMPTY_LETTER: Letter = frozenset()

_PROP_NAME = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')


class Alphabet:
    """Ordered finite set of distinct symbols.

    The stored order is the canonical enumeration order: every exhaustive
    loop in the toolkit walks symbols in this order, so tie-breaking is
    deterministic.
    """

    propositions: Optional[Tuple[str, ...]] = None

    def __init__(self, symbols: Iterable[Symbol]):
        self._symbols = tuple(symbols)
        self._index = {}
        for position, symbol in enumerate(self._symbols):
            if symbol in self._index:
                raise ValidationError(f"Duplicate alphabet symbol: {symbol!r}")
            self._index[symbol] = position
        if not self._symbols:
            raise ValidationError("Alphabet must contain at least one symbol")

    @classmethod
    def powerset(cls, propositions: Iterable[str]) -> 'PowersetAlphabet':
        return PowersetAlphabet(propositions)

    @classmethod
    def pairs(cls, states: Sequence[Symbol], actions: Sequence[Symbol]) -> 'Alphabet':
        """State-action alphabet S x A in state-major order."""
        return cls((state, action) for state in states for action in actions)

    @property
    def symbols(self) -> Tuple[Symbol, ...]:
        return self._symbols

    @property
    def first(self) -> Symbol:
        return self.symbols[0]

    def index(self, symbol: Symbol) -> int:
        try:
            return self._index[symbol]
        except (KeyError, TypeError):
            raise ValidationError(f"Symbol {symbol!r} is not in the alphabet")

    def words(self, length: int) -> Iterator[Tuple[Symbol, ...]]:
        """All words of the given length in lexicographic canonical order."""
        return itertools.product(self.symbols, repeat=length)

    def __contains__(self, symbol: Any) -> bool:
        try:
            return symbol in self._index
        except TypeError:
            return False

    def __iter__(self) -> Iterator[Symbol]:
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Alphabet):
            return NotImplemented
        return self.symbols == other.symbols

    def __hash__(self) -> int:
        return hash(self.symbols)

    def __repr__(self) -> str:
        return f"Alphabet({list(self.symbols)!r})"


class PowersetAlphabet(Alphabet):
    """The alphabet 2^Pi of proposition valuations.

    Symbols are frozensets of proposition names. Bitmask ``m`` names the set
    ``{Pi[i] | bit i of m is set}`` and canonical order is increasing ``m``.
    The symbol tuple is only materialised when something enumerates it.
    """

    def __init__(self, propositions: Iterable[str]):
        props = tuple(propositions)
        if len(set(props)) != len(props):
            raise ValidationError(f"Duplicate propositions: {list(props)}")
        for name in props:
            if not isinstance(name, str) or not _PROP_NAME.match(name):
                raise ValidationError(f"Invalid proposition name: {name!r}")
        self.propositions = props
        self._bits = {name: 1 << i for i, name in enumerate(props)}

    @cached_property
    def symbols(self) -> Tuple[Letter, ...]:
        return tuple(self._letter_of(mask) for mask in range(1 << len(self.propositions)))

    def _letter_of(self, mask: int) -> Letter:
        return frozenset(name for name, bit in self._bits.items() if mask & bit)

    @property
    def first(self) -> Letter:
        return EMPTY_LETTER

    def index(self, symbol: Symbol) -> int:
        if symbol not in self:
            raise ValidationError(f"Letter {symbol!r} is not a valuation of {list(self.propositions)}")
        return sum(self._bits[name] for name in symbol)

    def __contains__(self, symbol: Any) -> bool:
        return isinstance(symbol, frozenset) and all(name in self._bits for name in symbol)

    def __len__(self) -> int:
        return 1 << len(self.propositions)

    def __eq__(self, other: Any) -> bool:
        if isinstance(other, PowersetAlphabet):
            return self.propositions == other.propositions
        return super().__eq__(other)

    def __hash__(self) -> int:
        return hash(('powerset', self.propositions))

    def __repr__(self) -> str:
        return f"PowersetAlphabet({list(self.propositions)!r})"


@dataclass(frozen=True)
class LassoWord:
    """Ultimately periodic infinite word ``prefix . cycle^omega``."""

    prefix: Tuple[Symbol, ...]
    cycle: Tuple[Symbol, ...]
    alphabet: Alphabet

    def __post_init__(self):
        object.__setattr__(self, 'prefix', tuple(self.prefix))
        object.__setattr__(self, 'cycle', tuple(self.cycle))
        if not self.cycle:
            raise ValidationError("Lasso cycle must contain at least one letter")
        for symbol in itertools.chain(self.prefix, self.cycle):
            if symbol not in self.alphabet:
                raise ValidationError(f"Lasso letter {symbol!r} is not in {self.alphabet!r}")

    @classmethod
    def from_finite(cls, word: Sequence[Symbol], rep_symbol: Symbol, alphabet: Alphabet) -> 'LassoWord':
        """The representative ``word . rep_symbol^omega``."""
        return cls(tuple(word), (rep_symbol,), alphabet)

    @property
    def positions(self) -> int:
        """Number of distinct lasso positions (prefix plus one cycle)."""
        return len(self.prefix) + len(self.cycle)

    def successor(self, position: int) -> int:
        """Next lasso position, folding the end of the cycle back onto its start."""
        nxt = position + 1
        return nxt if nxt < self.positions else len(self.prefix)

    def letter(self, i: int) -> Symbol:
        if i < 0:
            raise IndexError(f"Negative word index {i}")
        if i < len(self.prefix):
            return self.prefix[i]
        return self.cycle[(i - len(self.prefix)) % len(self.cycle)]

    def __getitem__(self, i: int) -> Symbol:
        return self.letter(i)

    def unroll(self, length: int) -> Tuple[Symbol, ...]:
        return tuple(self.letter(i) for i in range(length))

    def __str__(self) -> str:
        return format_lasso(self)


class OutOfBound(Exception):
    """Raised by a BoundedProbe when a read targets an index at or past its bound."""

    def __init__(self, index: int, bound: int):
        self.index = index
        self.bound = bound
        super().__init__(f"read index {index} with bound {bound}")


class BoundedProbe:
    """Indexable view of a word that tracks the deepest read and caps it.

    Reading index ``i < bound`` returns the underlying letter and raises
    ``max_index_read`` to at least ``i + 1``; reading ``i >= bound`` raises
    ``OutOfBound``. A probe is single-owner state.
    """

    def __init__(self, underlying: Any, bound: Optional[int] = None):
        self.underlying = underlying
        self.bound = bound
        self.max_index_read = 0

    def __getitem__(self, i: int) -> Symbol:
        if i < 0:
            raise IndexError(f"Negative word index {i}")
        if self.bound is not None and i >= self.bound:
            raise OutOfBound(i, self.bound)
        if i + 1 > self.max_index_read:
            self.max_index_read = i + 1
        return self.underlying[i]


def letter_at(word: LassoWord, i: int) -> Symbol:
    """Return letter ``i`` of a lasso word (total for every ``i >= 0``)."""
    return word.letter(i)


def common_prefix_length(w1: LassoWord, w2: LassoWord, cap: int) -> int:
    """
    Length of the longest common prefix of two lassos, capped at ``cap``.

    Two lassos that agree on their first ``max(|prefix|) + lcm(|cycle|)``
    letters agree everywhere, so the scan never needs to go further than that.

    Args:
        w1: First word
        w2: Second word
        cap: Upper bound on the returned length

    Returns:
        min(Lprefix(w1, w2), cap)
    """
    if w1.alphabet != w2.alphabet:
        raise ValidationError("Cannot compare lasso words over different alphabets")
    if cap < 0:
        raise ValidationError(f"cap must be non-negative, got {cap}")

    period_bound = max(len(w1.prefix), len(w2.prefix)) + math.lcm(len(w1.cycle), len(w2.cycle))
    for i in range(min(cap, period_bound)):
        if w1.letter(i) != w2.letter(i):
            return i
    return cap


# --- text codecs ---------------------------------------------------------

def parse_rational(text: str) -> Fraction:
    """Parse ``p/q``, an integer, or a finite decimal into an exact rational."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError, AttributeError):
        raise ParseError(f"Invalid rational {text!r}")


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def format_decimal(value: Fraction, digits: int = 20) -> str:
    """Advisory decimal rendering, truncated to ``digits`` places and marked ``~``."""
    value = Fraction(value)
    sign = '-' if value < 0 else ''
    numerator, denominator = abs(value.numerator), value.denominator
    whole, remainder = divmod(numerator, denominator)
    fraction_digits = []
    for _ in range(digits):
        remainder *= 10
        digit, remainder = divmod(remainder, denominator)
        fraction_digits.append(str(digit))
    return f"~{sign}{whole}.{''.join(fraction_digits)}" if digits else f"~{sign}{whole}"


def parse_letter(text: str, offset: int = 0) -> Letter:
    """Parse a ``{p1,p2,...}`` valuation."""
    body = text.strip()
    if not (body.startswith('{') and body.endswith('}')):
        raise ParseError(f"Letter must look like {{p1,p2}}, got {text!r}", position=offset)
    inner = body[1:-1].strip()
    if not inner:
        return EMPTY_LETTER
    names = [name.strip() for name in inner.split(',')]
    for name in names:
        if not _PROP_NAME.match(name):
            raise ParseError(f"Invalid proposition name {name!r}", position=offset)
    return frozenset(names)


def format_letter(letter: Letter) -> str:
    return '{' + ','.join(sorted(letter)) + '}'


def parse_lasso(text: str, alphabet: Optional[Alphabet] = None) -> LassoWord:
    """
    Parse the lasso text format ``l1;l2;...^c1;c2;...``.

    Args:
        text: Lasso text, e.g. ``{};{}^{goal}``
        alphabet: Alphabet to validate against; when omitted, the powerset of
            the propositions mentioned in the text (sorted) is used

    Returns:
        The parsed LassoWord
    """
    if text.count('^') != 1:
        raise ParseError("Lasso text needs exactly one '^' between prefix and cycle",
                         position=text.find('^') if '^' in text else len(text))
    caret = text.index('^')
    prefix = _parse_letters(text[:caret], 0)
    cycle = _parse_letters(text[caret + 1:], caret + 1)
    if not cycle:
        raise ParseError("Lasso cycle must contain at least one letter", position=caret + 1)

    if alphabet is None:
        names = sorted(set().union(*prefix, *cycle))
        alphabet = Alphabet.powerset(names)
    return LassoWord(tuple(prefix), tuple(cycle), alphabet)


def _parse_letters(segment: str, offset: int) -> list:
    if not segment.strip():
        return []
    letters = []
    position = offset
    for chunk in segment.split(';'):
        letters.append(parse_letter(chunk, position))
        position += len(chunk) + 1
    return letters


def format_lasso(word: LassoWord) -> str:
    def render(symbol: Symbol) -> str:
        return format_letter(symbol) if isinstance(symbol, frozenset) else str(symbol)

    prefix = ';'.join(render(symbol) for symbol in word.prefix)
    cycle = ';'.join(render(symbol) for symbol in word.cycle)
    return f"{prefix}^{cycle}"


_TOKEN = re.compile(r'\{[^}]*\}|\S+')


def iter_directives(text: str) -> Iterator[Tuple[int, list]]:
    """
    Split a line-based input file into tokenized directives.

    ``#`` starts a comment; braces group a letter such as ``{goal, lava}``
    into one token. Yields ``(line_number, tokens)`` for non-empty lines.
    """
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if line:
            yield line_number, _TOKEN.findall(line)


def parse_keyword_value(token: str, key: str, line: int) -> str:
    """Value of a ``key=value`` token."""
    name, sep, value = token.partition('=')
    if not sep or name != key or not value:
        raise ParseError(f"Expected {key}=<value>, got {token!r}", line=line)
    return value


WILDCARD = '*'


def resolve_wildcards(rules: Sequence[Tuple[int, str, str, Any]], states: Sequence[str],
                      alphabet: 'PowersetAlphabet') -> dict:
    """
    Expand ``trans`` rules with ``*`` wildcards into a total (state, letter) table.

    A rule naming both the state and the letter beats one with a wildcard
    letter, which beats a wildcard state, which beats ``* *``; file order does
    not matter. Two rules of equal specificity for the same pair are an error.

    Args:
        rules: ``(line, state_token, letter_token, payload)`` tuples
        states: Declared states
        alphabet: Letter alphabet

    Returns:
        Mapping (state, letter) -> payload; pairs no rule covers are absent
    """
    chosen: dict = {}
    for line, state_token, letter_token, payload in rules:
        if state_token != WILDCARD and state_token not in states:
            raise ParseError(f"Unknown state {state_token!r}", line=line)
        if letter_token == WILDCARD:
            letters = list(alphabet)
        else:
            letter = parse_letter(letter_token)
            if letter not in alphabet:
                raise ParseError(f"Letter {letter_token} uses undeclared propositions", line=line)
            letters = [letter]
        sources = list(states) if state_token == WILDCARD else [state_token]
        specificity = (state_token != WILDCARD) * 2 + (letter_token != WILDCARD)

        for state in sources:
            for letter in letters:
                key = (state, letter)
                current = chosen.get(key)
                if current is None or current[0] < specificity:
                    chosen[key] = (specificity, line, payload)
                elif current[0] == specificity:
                    raise ParseError(f"Transition for {state} on {format_letter(letter)} "
                                     f"is also given on line {current[1]}", line=line)
    return {key: payload for key, (_, _, payload) in chosen.items()}
