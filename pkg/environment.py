"""
Finite MDPs with exact transition rows, history policies, seeded sampling
sessions with reset, and the grid-world environment.
"""

import bisect
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config import config
from errors import BudgetExceeded, ParseError, ValidationError
from foundations import (Alphabet, LassoWord, Symbol, format_letter, format_rational, iter_directives,
                         parse_letter, parse_rational)
from objective_core import ComputableObjective, LabelingFunction

logger = logging.getLogger(__name__)

State = Symbol
Action = Symbol
Pair = Tuple[State, Action]
History = Tuple[Tuple[Pair, ...], State]  # (state, action) pairs so far, current state

TWO_64 = 1 << 64
GRID_ACTIONS = ('up', 'down', 'left', 'right')
GRID_MOVES = {'up': (0, 1), 'down': (0, -1), 'left': (-1, 0), 'right': (1, 0)}
GRID_PROPS = ('goal', 'lava')


def thresholds_for(probabilities: Sequence[Fraction]) -> List[int]:
    """Integer cut points ceil(c_k * 2^64) of the cumulative sums of a distribution."""
    cuts = []
    cumulative = Fraction(0)
    for probability in probabilities:
        cumulative += probability
        cuts.append(math.ceil(cumulative * TWO_64))
    return cuts


def draw_index(cuts: Sequence[int], value: int) -> int:
    """Index selected by a uniform 64-bit draw."""
    return bisect.bisect_right(cuts, value)


@dataclass(frozen=True)
class Mdp:
    """
    Finite MDP with exact rational transition rows.

    ``rows[(s, a)]`` maps successor states to probabilities; every row is
    total over the declared (state, action) pairs and sums to exactly 1.
    """

    states: Tuple[State, ...]
    actions: Tuple[Action, ...]
    rows: Mapping[Pair, Mapping[State, Fraction]]
    initial: State
    _support: Dict[Pair, Tuple[Tuple[State, ...], List[int]]] = field(
        init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))
        object.__setattr__(self, 'actions', tuple(self.actions))
        if not self.states or not self.actions:
            raise ValidationError("An MDP needs at least one state and one action")
        if len(set(self.states)) != len(self.states) or len(set(self.actions)) != len(self.actions):
            raise ValidationError("States and actions must be distinct")
        if self.initial not in self.states:
            raise ValidationError(f"Initial state {self.initial!r} is not declared")

        known = set(self.states)
        normalized = {}
        for state in self.states:
            for action in self.actions:
                row = self.rows.get((state, action))
                if row is None:
                    raise ValidationError(f"Missing transition row for ({state!r}, {action!r})")
                clean = {}
                for target, probability in row.items():
                    probability = Fraction(probability)
                    if target not in known:
                        raise ValidationError(f"Row ({state!r}, {action!r}) targets unknown state {target!r}")
                    if probability < 0:
                        raise ValidationError(f"Negative probability in row ({state!r}, {action!r})")
                    clean[target] = probability
                total = sum(clean.values(), Fraction(0))
                if total != 1:
                    raise ValidationError(f"Row ({state!r}, {action!r}) sums to {total}, not 1")
                normalized[(state, action)] = clean
                positive = tuple(target for target in self.states if clean.get(target, 0) > 0)
                self._support[(state, action)] = (positive, thresholds_for([clean[t] for t in positive]))
        object.__setattr__(self, 'rows', normalized)

    @property
    def pairs(self) -> Alphabet:
        return Alphabet.pairs(self.states, self.actions)

    def row(self, state: State, action: Action) -> Mapping[State, Fraction]:
        try:
            return self.rows[(state, action)]
        except (KeyError, TypeError):
            raise ValidationError(f"No transition row for ({state!r}, {action!r})")

    def support(self, state: State, action: Action) -> Tuple[State, ...]:
        """Successors with positive probability, in state order."""
        self.row(state, action)
        return self._support[(state, action)][0]

    def sample_next(self, state: State, action: Action, value: int) -> State:
        """Successor picked by a uniform 64-bit integer."""
        if action not in self.actions:
            raise ValidationError(f"Unknown action {action!r}")
        targets, cuts = self._support[(state, action)]
        return targets[draw_index(cuts, value)]

    def is_deterministic(self) -> bool:
        return all(len(targets) == 1 for targets, _ in self._support.values())


# --- policies -------------------------------------------------------------

class Policy:
    """Rule from a finite history to a distribution over actions."""

    def __init__(self, actions: Sequence[Action]):
        self.actions = tuple(actions)

    def distribution(self, history: History) -> Dict[Action, Fraction]:
        raise NotImplementedError

    def checked_distribution(self, history: History) -> Dict[Action, Fraction]:
        dist = {action: Fraction(p) for action, p in self.distribution(history).items() if p}
        if sum(dist.values(), Fraction(0)) != 1 or any(p < 0 for p in dist.values()):
            raise ValidationError(f"Policy distribution {dist} for history {history!r} is not a distribution")
        unknown = [action for action in dist if action not in self.actions]
        if unknown:
            raise ValidationError(f"Policy chose unknown actions {unknown}")
        return dist

    def choose(self, history: History, value: int) -> Action:
        """Action picked by a uniform 64-bit integer, walking actions in canonical order."""
        dist = self.checked_distribution(history)
        ordered = [action for action in self.actions if action in dist]
        cuts = thresholds_for([dist[action] for action in ordered])
        return ordered[draw_index(cuts, value)]


class TablePolicy(Policy):
    """Deterministic policy given as a history -> action table.

    Histories missing from the table get the first action.
    """

    def __init__(self, actions: Sequence[Action], table: Mapping[History, Action]):
        super().__init__(actions)
        self.table = dict(table)
        for history, action in self.table.items():
            if action not in self.actions:
                raise ValidationError(f"Table maps {history!r} to unknown action {action!r}")

    def action(self, history: History) -> Action:
        return self.table.get(history, self.actions[0])

    def distribution(self, history: History) -> Dict[Action, Fraction]:
        return {self.action(history): Fraction(1)}

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, TablePolicy) and self.actions == other.actions and self.table == other.table

    def __hash__(self) -> int:
        return hash((self.actions, tuple(sorted(self.table.items(), key=repr))))

    def __len__(self) -> int:
        return len(self.table)


class UniformPolicy(Policy):
    def distribution(self, history: History) -> Dict[Action, Fraction]:
        share = Fraction(1, len(self.actions))
        return {action: share for action in self.actions}


class FunctionPolicy(Policy):
    """Policy backed by a callable returning an action or an action distribution."""

    def __init__(self, actions: Sequence[Action], rule: Callable[[History], Union[Action, Mapping[Action, Fraction]]]):
        super().__init__(actions)
        self.rule = rule

    def distribution(self, history: History) -> Dict[Action, Fraction]:
        result = self.rule(history)
        if isinstance(result, Mapping):
            return dict(result)
        return {result: Fraction(1)}


# --- sampling ---------------------------------------------------------------

@dataclass(frozen=True)
class TranscriptRecord:
    """One interaction: ``action is None`` marks a reset."""

    state: State
    action: Optional[Action]
    next_state: State


class SamplingSession:
    """
    Single-owner interaction with an MDP that only exposes sampled transitions.

    Draws come from a PCG64 generator seeded through ``SeedSequence(seed)``;
    ``spawn`` derives independent child sessions from the same seed sequence.
    """

    BATCH = 1024

    def __init__(self, mdp: Mdp, seed: Optional[int] = None, budget: Optional[int] = None,
                 seed_sequence: Optional[np.random.SeedSequence] = None, keep_transcript: bool = True):
        self.mdp = mdp
        self.keep_transcript = keep_transcript
        self.seed = seed if seed is not None else config.default_seed
        self.budget = budget if budget is not None else config.sample_budget
        self._seed_sequence = seed_sequence if seed_sequence is not None else np.random.SeedSequence(self.seed)
        self._rng = np.random.Generator(np.random.PCG64(self._seed_sequence))
        self._buffer: List[int] = []
        self._cursor = 0
        self.state = mdp.initial
        self.transcript: List[TranscriptRecord] = []
        self.samples = 0
        self.resets = 0

    def draw(self) -> int:
        """Next uniform integer in [0, 2^64)."""
        if self._cursor == len(self._buffer):
            batch = self._rng.integers(0, TWO_64 - 1, dtype=np.uint64, endpoint=True, size=self.BATCH)
            self._buffer = [int(value) for value in batch]
            self._cursor = 0
        value = self._buffer[self._cursor]
        self._cursor += 1
        return value

    def reset(self) -> State:
        if self.keep_transcript:
            self.transcript.append(TranscriptRecord(self.state, None, self.mdp.initial))
        self.state = self.mdp.initial
        self.resets += 1
        return self.state

    def step(self, action: Action) -> State:
        if action not in self.mdp.actions:
            raise ValidationError(f"Unknown action {action!r}")
        if self.samples >= self.budget:
            raise BudgetExceeded('environment samples', self.budget, required=self.samples + 1)
        nxt = self.mdp.sample_next(self.state, action, self.draw())
        if self.keep_transcript:
            self.transcript.append(TranscriptRecord(self.state, action, nxt))
        self.state = nxt
        self.samples += 1
        return nxt

    def spawn(self, count: int) -> List['SamplingSession']:
        return [
            SamplingSession(self.mdp, self.seed, self.budget, seed_sequence=child,
                            keep_transcript=self.keep_transcript)
            for child in self._seed_sequence.spawn(count)
        ]


def rollout(session: SamplingSession, policy: Policy, horizon: int) -> Tuple[Pair, ...]:
    """Reset and run the policy for ``horizon`` steps, returning the (state, action) pairs."""
    state = session.reset()
    pairs: Tuple[Pair, ...] = ()
    for _ in range(horizon):
        action = policy.choose((pairs, state), session.draw())
        nxt = session.step(action)
        pairs += ((state, action),)
        state = nxt
    return pairs


def policy_value_estimate(mdp: Mdp, policy: Policy, objective: ComputableObjective, n: int,
                          episodes: int, horizon: int, seed: Optional[int] = None,
                          rep_symbol: Optional[Pair] = None) -> Fraction:
    """
    Monte Carlo estimate of a policy's expected objective value.

    Each episode's pairs are extended by ``rep_symbol`` forever and scored
    with ``objective.approx(., n)``.

    Args:
        mdp: Environment
        policy: Policy to evaluate
        objective: Objective over the MDP's (state, action) pairs
        n: Approximation index
        episodes: Number of rollouts, >= 1
        horizon: Rollout length, at least the objective's read horizon for n
        seed: Session seed
        rep_symbol: Repetition pair (defaults to the first pair)

    Returns:
        Mean score as an exact rational
    """
    if episodes < 1:
        raise ValidationError(f"Need at least one episode, got {episodes}")
    declared = objective.horizon(n)
    if declared is not None and horizon < declared:
        raise ValidationError(f"Rollout horizon {horizon} is shorter than the objective's horizon {declared}")
    alphabet = objective.alphabet
    rep = rep_symbol if rep_symbol is not None else alphabet.first

    session = SamplingSession(mdp, seed, keep_transcript=False)
    total = Fraction(0)
    for _ in range(episodes):
        pairs = rollout(session, policy, horizon)
        total += objective.approx(LassoWord.from_finite(pairs, rep, alphabet), n)
    estimate = total / episodes
    logger.info(f"Estimated policy value over {episodes} episodes: {estimate}")
    return estimate


# --- grid world ---------------------------------------------------------------

Cell = Tuple[int, int]


def build_gridworld(width: int, height: int, lava: Sequence[Cell] = (), goal: Optional[Cell] = None,
                    slip: Fraction = Fraction(0), start: Cell = (0, 0)) -> Tuple[Mdp, LabelingFunction]:
    """
    Grid world whose cells are labeled {goal}, {lava} or {}.

    Actions move one cell; moves into the outer wall leave the agent in
    place, and with probability ``slip`` any move fails and the agent stays.

    Args:
        width: Number of columns
        height: Number of rows
        lava: Lava cells
        goal: Goal cell
        slip: Failure probability in [0, 1)
        start: Start cell

    Returns:
        (Mdp over (x, y) cells, labeling over 2^{goal, lava})
    """
    slip = Fraction(slip)
    if width < 1 or height < 1:
        raise ValidationError(f"Grid must be at least 1x1, got {width}x{height}")
    if not 0 <= slip < 1:
        raise ValidationError(f"slip must lie in [0, 1), got {slip}")

    def inside(cell: Cell) -> bool:
        return 0 <= cell[0] < width and 0 <= cell[1] < height

    lava_cells = [tuple(cell) for cell in lava]
    named = lava_cells + ([tuple(goal)] if goal is not None else []) + [tuple(start)]
    for cell in named:
        if not inside(cell):
            raise ValidationError(f"Cell {cell} is outside the {width}x{height} grid")
    if goal is not None and tuple(goal) in lava_cells:
        raise ValidationError(f"Cell {tuple(goal)} cannot be both goal and lava")

    states = tuple((x, y) for y in range(height) for x in range(width))
    rows: Dict[Pair, Dict[State, Fraction]] = {}
    for cell in states:
        for action in GRID_ACTIONS:
            dx, dy = GRID_MOVES[action]
            target = (cell[0] + dx, cell[1] + dy)
            if not inside(target) or target == cell:
                rows[(cell, action)] = {cell: Fraction(1)}
            elif slip == 0:
                rows[(cell, action)] = {target: Fraction(1)}
            else:
                rows[(cell, action)] = {target: 1 - slip, cell: slip}

    mdp = Mdp(states, GRID_ACTIONS, rows, tuple(start))
    labels = {
        cell: frozenset({'goal'}) if goal is not None and cell == tuple(goal)
        else frozenset({'lava'}) if cell in lava_cells
        else frozenset()
        for cell in states
    }
    labeling = LabelingFunction.from_state_labels(states, GRID_ACTIONS, labels, Alphabet.powerset(GRID_PROPS))
    logger.info(f"Built {width}x{height} grid world, {len(lava_cells)} lava cells, slip={slip}")
    return mdp, labeling


def _cell(args: Sequence[str], line: int) -> Cell:
    if len(args) != 2:
        raise ParseError("Expected two integer coordinates", line=line)
    try:
        return int(args[0]), int(args[1])
    except ValueError:
        raise ParseError(f"Invalid coordinates {' '.join(args)}", line=line)


def parse_grid(text: str) -> Tuple[Mdp, LabelingFunction]:
    """Parse ``grid W H``, ``lava x y``, ``goal x y``, ``slip p/q`` and ``start x y`` lines."""
    size = None
    lava: List[Cell] = []
    goal = None
    slip = Fraction(0)
    start = (0, 0)
    for line, tokens in iter_directives(text):
        keyword, args = tokens[0], tokens[1:]
        if keyword == 'grid':
            size = _cell(args, line)
        elif keyword == 'lava':
            lava.append(_cell(args, line))
        elif keyword == 'goal':
            goal = _cell(args, line)
        elif keyword == 'start':
            start = _cell(args, line)
        elif keyword == 'slip':
            if len(args) != 1:
                raise ParseError("Expected 'slip <rational>'", line=line)
            slip = parse_rational(args[0])
        else:
            raise ParseError(f"Unknown directive {keyword!r}", line=line)
    if size is None:
        raise ParseError("Missing 'grid W H' line")
    return build_gridworld(size[0], size[1], lava, goal, slip, start)


# --- MDP text format -------------------------------------------------------------

def parse_mdp(text: str) -> Tuple[Mdp, Optional[LabelingFunction]]:
    """
    Parse the MDP dump format.

    ``mdp``, ``states ...``, ``actions ...``, ``init s``, one
    ``row s a : s1=p1 s2=p2 ...`` per pair, and optionally ``props ...`` plus
    ``label s {p,...}`` lines that label every pair of state s (unlabeled
    states get {}).

    Returns:
        (Mdp, labeling or None when the file declares no labels)
    """
    header = False
    states: Tuple[str, ...] = ()
    actions: Tuple[str, ...] = ()
    initial = None
    rows: Dict[Pair, Dict[str, Fraction]] = {}
    props: Optional[Tuple[str, ...]] = None
    labels: Dict[str, frozenset] = {}

    for line, tokens in iter_directives(text):
        keyword, args = tokens[0], tokens[1:]
        if keyword == 'mdp':
            header = True
        elif keyword == 'states':
            states = tuple(args)
        elif keyword == 'actions':
            actions = tuple(args)
        elif keyword == 'init':
            if len(args) != 1:
                raise ParseError("Expected 'init <state>'", line=line)
            initial = args[0]
        elif keyword == 'row':
            if len(args) < 4 or args[2] != ':':
                raise ParseError("Expected 'row <state> <action> : <state>=<p> ...'", line=line)
            key = (args[0], args[1])
            if key in rows:
                raise ParseError(f"Duplicate row for {key}", line=line)
            row: Dict[str, Fraction] = {}
            for entry in args[3:]:
                target, sep, probability = entry.partition('=')
                if not sep:
                    raise ParseError(f"Expected <state>=<p>, got {entry!r}", line=line)
                row[target] = row.get(target, Fraction(0)) + parse_rational(probability)
            rows[key] = row
        elif keyword == 'props':
            props = tuple(args)
        elif keyword == 'label':
            if len(args) != 2:
                raise ParseError("Expected 'label <state> {p,...}'", line=line)
            labels[args[0]] = parse_letter(args[1])
        else:
            raise ParseError(f"Unknown directive {keyword!r}", line=line)

    if not header:
        raise ParseError("Missing 'mdp' header")
    if initial is None:
        raise ParseError("Missing 'init' line")
    mdp = Mdp(states, actions, rows, initial)

    labeling = None
    if labels or props is not None:
        unknown = [state for state in labels if state not in states]
        if unknown:
            raise ParseError(f"Labels for unknown states {unknown}")
        if props is None:
            props = tuple(sorted(set().union(*labels.values())))
        codomain = Alphabet.powerset(props)
        full = {state: labels.get(state, frozenset()) for state in states}
        labeling = LabelingFunction.from_state_labels(states, actions, full, codomain)
    logger.info(f"Loaded MDP with {len(states)} states and {len(actions)} actions")
    return mdp, labeling


def _token(value: Any) -> str:
    if isinstance(value, tuple):
        return ','.join(str(part) for part in value)
    return str(value)


def dump_mdp(mdp: Mdp, labeling: Optional[LabelingFunction] = None) -> str:
    """Render an MDP (and a state labeling) in the format ``parse_mdp`` reads."""
    lines = [
        'mdp',
        'states ' + ' '.join(_token(state) for state in mdp.states),
        'actions ' + ' '.join(_token(action) for action in mdp.actions),
        f"init {_token(mdp.initial)}",
    ]
    for state in mdp.states:
        for action in mdp.actions:
            row = mdp.row(state, action)
            entries = ' '.join(f"{_token(target)}={format_rational(row[target])}"
                               for target in mdp.states if row.get(target, 0) > 0)
            lines.append(f"row {_token(state)} {_token(action)} : {entries}")
    if labeling is not None:
        lines.append('props ' + ' '.join(labeling.codomain.propositions or ()))
        for state in mdp.states:
            letter = labeling((state, mdp.actions[0]))
            if letter:
                lines.append(f"label {_token(state)} {format_letter(letter)}")
    return '\n'.join(lines) + '\n'
