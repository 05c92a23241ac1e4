"""
Computable objectives, labeling composition, modulus of continuity and the
finite-horizon truncation used by the learning reduction.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

from config import config
from errors import BudgetExceeded, ValidationError
from foundations import Alphabet, BoundedProbe, LassoWord, OutOfBound, Symbol

logger = logging.getLogger(__name__)

Word = Any  # anything indexable by natural numbers
ApproxFn = Callable[[Word, int], Fraction]
HorizonFn = Callable[[int], int]


@dataclass(frozen=True)
class ComputableObjective:
    """
    A bounded objective given by fast-converging rational approximations.

    ``approx(w, n)`` must lie within ``2^-n`` of the objective's value on ``w``
    and may read ``w`` only through integer indexing. ``horizon(n)``, when
    declared, is an upper bound on how many leading letters ``approx(., n)``
    reads.
    """

    alphabet: Alphabet
    approx_fn: ApproxFn = field(repr=False)
    value_bound: Fraction
    horizon_fn: Optional[HorizonFn] = field(default=None, repr=False)
    name: str = 'objective'

    def approx(self, word: Word, n: int) -> Fraction:
        if n < 0:
            raise ValidationError(f"Approximation index must be non-negative, got {n}")
        return self.approx_fn(word, n)

    def __call__(self, word: Word, n: int) -> Fraction:
        return self.approx(word, n)

    def horizon(self, n: int) -> Optional[int]:
        return self.horizon_fn(n) if self.horizon_fn is not None else None


@dataclass(frozen=True)
class LabelingFunction:
    """Total map from the (state, action) pairs of an MDP to objective features."""

    mapping: Mapping[Tuple[Any, Any], Symbol]
    domain: Alphabet
    codomain: Alphabet

    def __post_init__(self):
        for pair in self.domain:
            if pair not in self.mapping:
                raise ValidationError(f"Labeling is not total: no feature for {pair!r}")
            if self.mapping[pair] not in self.codomain:
                raise ValidationError(f"Feature {self.mapping[pair]!r} of {pair!r} is outside the codomain")

    @classmethod
    def from_state_labels(cls, states: Sequence[Any], actions: Sequence[Any],
                          labels: Mapping[Any, Symbol], codomain: Alphabet) -> 'LabelingFunction':
        """Labeling that ignores the action and labels each pair by its state."""
        domain = Alphabet.pairs(states, actions)
        mapping = {(state, action): labels[state] for state, action in domain}
        return cls(mapping, domain, codomain)

    def image(self) -> Tuple[Symbol, ...]:
        return tuple(dict.fromkeys(self.mapping[pair] for pair in self.domain))

    def __call__(self, pair: Tuple[Any, Any]) -> Symbol:
        try:
            return self.mapping[pair]
        except (KeyError, TypeError):
            raise ValidationError(f"{pair!r} is not in the labeling's domain")


class LabeledWord:
    """Lazy element-wise image of a word under a labeling function."""

    def __init__(self, word: Word, labeling: LabelingFunction):
        self.word = word
        self.labeling = labeling

    def __getitem__(self, i: int) -> Symbol:
        return self.labeling(self.word[i])


def compose_with_labeling(xi: ComputableObjective, labeling: LabelingFunction) -> ComputableObjective:
    """
    Lift an environment-generic objective to the MDP's (state, action) pairs.

    Index ``i`` of the labeled word reads only index ``i`` of the input, so
    every prefix-length bound of ``xi`` holds for the composition as well.

    Args:
        xi: Objective over features
        labeling: Labeling function whose image lies in xi's alphabet

    Returns:
        Objective over the labeling's domain
    """
    outside = [feature for feature in labeling.image() if feature not in xi.alphabet]
    if outside:
        raise ValidationError(f"Labeling produces features outside {xi.name}'s alphabet: {outside!r}")

    def approx(word: Word, n: int) -> Fraction:
        return xi.approx(LabeledWord(word, labeling), n)

    return ComputableObjective(
        alphabet=labeling.domain,
        approx_fn=approx,
        value_bound=xi.value_bound,
        horizon_fn=xi.horizon_fn,
        name=f"{xi.name}.labeled",
    )


def n_for_eps(eps: Fraction) -> int:
    """Smallest natural n with 2^-n <= eps, i.e. max(0, ceil(-log2 eps))."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    n = 0
    while Fraction(1, 1 << n) > eps:
        n += 1
    return n


def smallest_power_at_most(base: Fraction, bound: Fraction) -> int:
    """
    Smallest natural k with base^k <= bound, by doubling then binary search.

    Args:
        base: Rational in (0, 1)
        bound: Positive rational

    Returns:
        The exponent k
    """
    base, bound = Fraction(base), Fraction(bound)
    if not 0 < base < 1:
        raise ValidationError(f"base must lie in (0, 1), got {base}")
    if bound <= 0:
        raise ValidationError(f"bound must be positive, got {bound}")
    if bound >= 1:
        return 0

    high = 1
    while base ** high > bound:
        high *= 2
    low = high // 2  # base^low > bound
    while high - low > 1:
        middle = (low + high) // 2
        if base ** middle <= bound:
            high = middle
        else:
            low = middle
    return high


def _reads_within(objective: ComputableObjective, horizon: int, n: int) -> bool:
    for word in objective.alphabet.words(horizon):
        try:
            objective.approx(BoundedProbe(word, horizon), n)
        except OutOfBound:
            return False
    return True


def modulus_of_continuity(objective: ComputableObjective, eps: Fraction, budget: Optional[int] = None) -> int:
    """
    Find the first H such that approximating to within eps reads only H letters.

    The search runs every word of X^H through the objective with a probe
    bounded at H, for H = 1, 2, ... When the objective declares its read
    horizon and the search reaches it, that horizon is the answer. When the
    next enumeration would exceed the budget, the declared horizon (a valid
    but possibly non-minimal modulus) is returned instead; objectives without
    one raise BudgetExceeded.

    Args:
        objective: Objective to analyse
        eps: Target precision, > 0
        budget: Cap on |X|^H (defaults to the configured enumeration budget)

    Returns:
        The horizon H >= 1
    """
    n = n_for_eps(eps)
    budget = budget if budget is not None else config.enumeration_budget
    declared = objective.horizon(n)
    symbols = len(objective.alphabet)

    horizon = 1
    while True:
        if declared is not None and horizon >= declared:
            logger.debug(f"Modulus of {objective.name} at eps={eps}: reached declared horizon, H={horizon}")
            return horizon

        size = symbols ** horizon
        if size > budget:
            if declared is not None:
                logger.warning(f"Modulus search for {objective.name} stopped at H={horizon} "
                               f"({size} words > budget {budget}); using declared horizon {declared}")
                return declared
            raise BudgetExceeded('modulus enumeration', budget, required=size, last_horizon=horizon - 1)

        if _reads_within(objective, horizon, n):
            logger.debug(f"Modulus of {objective.name} at eps={eps}: H={horizon}")
            return horizon
        horizon += 1


@dataclass(frozen=True)
class TruncatedObjective:
    """Finite-horizon stand-in for an objective: a function of the first H letters."""

    objective: ComputableObjective
    horizon: int
    n: int
    rep_symbol: Symbol
    eps_prime: Fraction

    def evaluate(self, prefix: Sequence[Symbol]) -> Fraction:
        if len(prefix) != self.horizon:
            raise ValidationError(f"Truncated objective takes words of length {self.horizon}, got {len(prefix)}")
        word = LassoWord.from_finite(prefix, self.rep_symbol, self.objective.alphabet)
        return self.objective.approx(word, self.n)

    def __call__(self, prefix: Sequence[Symbol]) -> Fraction:
        return self.evaluate(prefix)


def truncate_objective(objective: ComputableObjective, eps_prime: Fraction,
                       rep_symbol: Optional[Symbol] = None, budget: Optional[int] = None) -> TruncatedObjective:
    """
    Build the finite-horizon objective that is eps'-close to ``objective``.

    Half of eps' pays for continuity (the horizon) and half for the rational
    approximation; the value on a prefix u is the objective's approximation on
    the representative ``u . rep_symbol^omega``.

    Args:
        objective: Objective to truncate
        eps_prime: Total error allowance, > 0
        rep_symbol: Repetition symbol (defaults to the first alphabet symbol)
        budget: Enumeration budget for the modulus search

    Returns:
        TruncatedObjective with its horizon and approximation index
    """
    eps_prime = Fraction(eps_prime)
    if eps_prime <= 0:
        raise ValidationError(f"eps' must be positive, got {eps_prime}")
    if rep_symbol is None:
        rep_symbol = objective.alphabet.first
    elif rep_symbol not in objective.alphabet:
        raise ValidationError(f"Repetition symbol {rep_symbol!r} is not in the objective's alphabet")

    half = eps_prime / 2
    n = n_for_eps(half)
    horizon = modulus_of_continuity(objective, half, budget)
    logger.info(f"Truncated {objective.name} at eps'={eps_prime}: H={horizon}, n={n}")
    return TruncatedObjective(objective, horizon, n, rep_symbol, eps_prime)


def constant_objective(alphabet: Alphabet, value: Union[int, Fraction]) -> ComputableObjective:
    value = Fraction(value)
    return ComputableObjective(
        alphabet=alphabet,
        approx_fn=lambda word, n: value,
        value_bound=abs(value),
        horizon_fn=lambda n: 0,
        name=f"constant({value})",
    )


def finite_horizon_objective(alphabet: Alphabet, horizon: int,
                             reward: Union[Mapping[Symbol, Fraction], Callable[[Symbol], Fraction]],
                             name: str = 'finite_horizon') -> ComputableObjective:
    """
    Undiscounted sum of per-letter rewards over the first ``horizon`` letters.

    Its value is exact at every n, so the approximation ignores n.
    """
    if horizon < 0:
        raise ValidationError(f"horizon must be non-negative, got {horizon}")
    table: Dict[Symbol, Fraction] = {
        symbol: Fraction(reward[symbol] if isinstance(reward, Mapping) else reward(symbol))
        for symbol in alphabet
    }

    def approx(word: Word, n: int) -> Fraction:
        total = Fraction(0)
        for k in range(horizon):
            symbol = word[k]
            if symbol not in table:
                raise ValidationError(f"Letter {symbol!r} is not in the objective's alphabet")
            total += table[symbol]
        return total

    bound = horizon * max((abs(value) for value in table.values()), default=Fraction(0))
    return ComputableObjective(alphabet, approx, Fraction(bound), lambda n: horizon, name)


def discounted_objective(alphabet: Alphabet, gamma: Fraction,
                         reward: Union[Mapping[Symbol, Fraction], Callable[[Symbol], Fraction]],
                         name: str = 'discounted') -> ComputableObjective:
    """
    Discounted sum of per-letter rewards, sum over i of gamma^i r(w_i).

    ``approx(., n)`` sums the first H terms, H the smallest natural with
    r_max * gamma^H / (1 - gamma) <= 2^-n.

    Args:
        alphabet: Letters the rewards are defined on
        gamma: Discount factor in (0, 1)
        reward: Reward per letter, as a mapping or a function

    Returns:
        ComputableObjective with values in [-r_max/(1-gamma), r_max/(1-gamma)]
    """
    gamma = Fraction(gamma)
    if not 0 < gamma < 1:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
    table: Dict[Symbol, Fraction] = {
        symbol: Fraction(reward[symbol] if isinstance(reward, Mapping) else reward(symbol))
        for symbol in alphabet
    }
    r_max = max((abs(value) for value in table.values()), default=Fraction(0))

    def horizon(n: int) -> int:
        if r_max == 0:
            return 0
        return smallest_power_at_most(gamma, (1 - gamma) / (r_max * 2 ** n))

    def approx(word: Word, n: int) -> Fraction:
        total = Fraction(0)
        discount = Fraction(1)
        for k in range(horizon(n)):
            symbol = word[k]
            if symbol not in table:
                raise ValidationError(f"Letter {symbol!r} is not in the objective's alphabet")
            total += discount * table[symbol]
            discount *= gamma
        return total

    return ComputableObjective(alphabet, approx, r_max / (1 - gamma), horizon, name)
