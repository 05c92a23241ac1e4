"""
PAC learning for computable objectives.

The objective is truncated to a finite horizon H, the MDP is lifted to the
tree of histories with the truncated objective as terminal reward, and a
model-based learner estimates the base transition rows from samples and
plans exactly on the empirical model. Any finite-horizon PAC learner could
replace the estimator behind ``pac_learn``.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from config import config
from errors import BudgetExceeded, InvariantViolation, ValidationError
from environment import History, Mdp, Pair, Policy, SamplingSession, State, TablePolicy, UniformPolicy
from objective_core import (ComputableObjective, LabelingFunction, TruncatedObjective,
                            compose_with_labeling, truncate_objective)

logger = logging.getLogger(__name__)

# Share of delta spent on the union bound over transition rows; the rest is unused.
DELTA_ROWS_SHARE = Fraction(1, 2)


class LiftedMdp:
    """
    Tree-shaped MDP over histories of a base MDP.

    Decision nodes are the histories ``(pairs, state)`` with fewer than H
    pairs. Choosing action a at depth H-1 ends the episode with terminal
    reward ``truncated(pairs + ((state, a),))``; every earlier reward is 0.
    """

    def __init__(self, base: Mdp, truncated: TruncatedObjective):
        if truncated.objective.alphabet != base.pairs:
            raise ValidationError("Objective alphabet must be the MDP's (state, action) pairs")
        self.base = base
        self.truncated = truncated
        self.horizon = truncated.horizon
        self._rewards: Dict[Tuple[Pair, ...], Fraction] = {}

    @property
    def root(self) -> History:
        return (), self.base.initial

    def terminal_reward(self, pairs: Tuple[Pair, ...]) -> Fraction:
        reward = self._rewards.get(pairs)
        if reward is None:
            reward = self.truncated.evaluate(pairs)
            self._rewards[pairs] = reward
        return reward

    def children(self, history: History, action) -> List[Tuple[Fraction, History]]:
        """(probability, child history) for each positive-probability successor."""
        pairs, state = history
        extended = pairs + ((state, action),)
        row = self.base.row(state, action)
        return [(row[target], (extended, target)) for target in self.base.support(state, action)]

    def count_nodes(self, budget: Optional[int] = None) -> int:
        """Number of reachable decision nodes, aborting once it passes ``budget``."""
        cap = budget if budget is not None else config.tree_budget
        if self.horizon == 0:
            return 0
        count = 0
        frontier = [self.root]
        while frontier:
            history = frontier.pop()
            count += 1
            if count > cap:
                raise BudgetExceeded('lifted tree', cap, required=count, last_horizon=self.horizon)
            if len(history[0]) + 1 < self.horizon:
                for action in self.base.actions:
                    frontier.extend(child for _, child in self.children(history, action))
        return count


def _expand(lifted: LiftedMdp, choose) -> Tuple[List[List[History]], Dict[Tuple[History, object], list]]:
    """Decision nodes level by level, following the actions ``choose(history)`` lists at each node."""
    levels = [[lifted.root]]
    edges: Dict[Tuple[History, object], list] = {}
    for _ in range(lifted.horizon - 1):
        frontier = []
        for history in levels[-1]:
            for action in choose(history):
                children = lifted.children(history, action)
                edges[(history, action)] = children
                frontier.extend(child for _, child in children)
        levels.append(frontier)
    return levels, edges


def _backup(lifted: LiftedMdp, depth: int, history: History, action, edges, values) -> Fraction:
    pairs, state = history
    if depth + 1 == lifted.horizon:
        return lifted.terminal_reward(pairs + ((state, action),))
    return sum((p * values[child] for p, child in edges[(history, action)]), Fraction(0))


def exact_plan(lifted: LiftedMdp, budget: Optional[int] = None) -> Tuple[TablePolicy, Fraction]:
    """
    Backward induction on the lifted tree.

    Args:
        lifted: Lifted MDP with a known model
        budget: Cap on decision nodes (defaults to the configured tree budget)

    Returns:
        (optimal deterministic history policy, optimal value); ties go to the
        first action in canonical order
    """
    lifted.count_nodes(budget)
    actions = lifted.base.actions
    horizon = lifted.horizon
    table: Dict[History, object] = {}

    if horizon == 0:
        return TablePolicy(actions, {}), lifted.terminal_reward(())

    levels, edges = _expand(lifted, lambda history: actions)
    values: Dict[History, Fraction] = {}
    for depth in reversed(range(horizon)):
        for history in levels[depth]:
            best_value = None
            best_action = None
            for action in actions:
                value = _backup(lifted, depth, history, action, edges, values)
                if best_value is None or value > best_value:
                    best_value, best_action = value, action
            table[history] = best_action
            values[history] = best_value

    value = values[lifted.root]
    logger.info(f"Planned {len(table)} decision nodes at H={horizon}: value {value}")
    return TablePolicy(actions, table), value


def evaluate_policy(lifted: LiftedMdp, policy: Policy) -> Fraction:
    """Exact expected terminal reward of a history policy on the lifted MDP."""
    horizon = lifted.horizon
    if horizon == 0:
        return lifted.terminal_reward(())

    distributions: Dict[History, dict] = {}

    def choose(history: History):
        distributions[history] = policy.checked_distribution(history)
        return list(distributions[history])

    levels, edges = _expand(lifted, choose)
    values: Dict[History, Fraction] = {}
    for depth in reversed(range(horizon)):
        for history in levels[depth]:
            distribution = distributions.get(history)
            if distribution is None:
                distribution = distributions[history] = policy.checked_distribution(history)
            values[history] = sum((weight * _backup(lifted, depth, history, action, edges, values)
                                   for action, weight in distribution.items()), Fraction(0))
    return values[lifted.root]


def samples_per_row(eps: Fraction, delta: Fraction, horizon: int, value_bound: Fraction,
                    n_states: int, n_actions: int, n: Optional[int] = None) -> int:
    """
    Samples per base transition row for the estimation half of the error budget.

    Terminal rewards are 2^-n approximations, so they lie within
    B = value_bound + 2^-n of zero (B = value_bound when n is omitted).
    With L1 row error at most tau = eps / (4 H B), every policy's value on the
    empirical model is within H B tau = eps / 4 of its true value, so the
    empirical optimum loses at most eps / 2. The L1 deviation bound
    P(|p - p_hat|_1 >= tau) <= 2^|S| exp(-N tau^2 / 2), union-bounded over the
    |S||A| rows at confidence delta / 2, gives
    N = ceil(2 / tau^2 * (|S| ln 2 + ln(2 |S||A| / (delta / 2)))).
    """
    eps, delta, value_bound = Fraction(eps), Fraction(delta), Fraction(value_bound)
    if horizon < 1 or value_bound <= 0:
        return 0
    scale = value_bound if n is None else value_bound + Fraction(1, 2 ** n)
    tau = eps / (4 * horizon * scale)
    rows = n_states * n_actions
    confidence = delta * DELTA_ROWS_SHARE
    log_term = n_states * math.log(2) + math.log(2 * rows / confidence)
    return math.ceil(2 * log_term / float(tau) ** 2)


def _route(graph: Dict[State, Dict[object, set]], actions, source: State, steps: int,
           wanted) -> Optional[object]:
    """First action of a shortest observed path from ``source`` to a wanted state within ``steps``."""
    seen = {source}
    queue = deque([(source, 0, None)])
    while queue:
        state, depth, first = queue.popleft()
        if depth > 0 and wanted(state):
            return first
        if depth == steps:
            continue
        for action in actions:
            for target in sorted(graph.get(state, {}).get(action, ()), key=repr):
                if target not in seen:
                    seen.add(target)
                    queue.append((target, depth + 1, first if first is not None else action))
    return None


def collect_counts(session: SamplingSession, horizon: int, per_row: int) -> Dict[Pair, Dict[State, int]]:
    """
    Sample every base row reachable within the first H - 1 steps ``per_row`` times.

    Episodes start with a reset. In each state the first unfinished action
    is sampled; when none is left there, the agent follows observed
    transitions toward the nearest state that still has unfinished rows.

    Returns:
        Successor counts for each sampled (state, action) row
    """
    mdp = session.mdp
    actions = mdp.actions
    counts: Dict[Pair, Dict[State, int]] = {}
    totals: Dict[Pair, int] = {}
    depth_of: Dict[State, int] = {}
    graph: Dict[State, Dict[object, set]] = {}
    open_actions: Dict[State, List[object]] = {}  # decision-depth states with unfinished rows

    def discover(state: State, depth: int):
        if depth < depth_of.get(state, horizon):
            if state not in depth_of and per_row > 0:
                open_actions[state] = list(actions)
            depth_of[state] = depth

    discover(mdp.initial, 0)
    while open_actions:
        state = session.reset()
        for t in range(horizon):
            pending = open_actions.get(state)
            if pending:
                action = pending[0]
            else:
                action = _route(graph, actions, state, horizon - 1 - t, open_actions.__contains__)
                if action is None:
                    if t == 0:
                        raise InvariantViolation("Rows remain unsampled but no observed route reaches them")
                    break
            nxt = session.step(action)
            graph.setdefault(state, {}).setdefault(action, set()).add(nxt)
            key = (state, action)
            if pending and action == pending[0]:
                totals[key] = totals.get(key, 0) + 1
                row = counts.setdefault(key, {})
                row[nxt] = row.get(nxt, 0) + 1
                if totals[key] == per_row:
                    pending.pop(0)
                    if not pending:
                        del open_actions[state]
            if t + 1 < horizon:
                discover(nxt, t + 1)
            state = nxt

    logger.info(f"Collected {per_row} samples for each of {len(counts)} rows "
                f"({session.samples} environment steps, {session.resets} resets)")
    return counts


def empirical_mdp(counts: Dict[Pair, Dict[State, int]], base: Mdp) -> Mdp:
    """Empirical model from successor counts; rows never sampled become self-loops."""
    rows = {}
    for state in base.states:
        for action in base.actions:
            observed = counts.get((state, action))
            if observed:
                total = sum(observed.values())
                rows[(state, action)] = {target: Fraction(k, total) for target, k in observed.items()}
            else:
                rows[(state, action)] = {state: Fraction(1)}
    return Mdp(base.states, base.actions, rows, base.initial)


@dataclass
class LearnResult:
    """Outcome of a PAC learning run."""

    policy: Policy
    horizon: int
    n: int
    samples_per_row: int
    rows_estimated: int
    samples_used: int
    empirical_value: Optional[Fraction]
    shortcut: Optional[str] = None


def _all_leaves_zero(truncated: TruncatedObjective, budget: int) -> bool:
    alphabet = truncated.objective.alphabet
    if len(alphabet) ** truncated.horizon > budget:
        return False
    return all(truncated.evaluate(word) == 0 for word in alphabet.words(truncated.horizon))


def pac_learn(session: SamplingSession, objective: ComputableObjective, eps: Fraction, delta: Fraction,
              rep_symbol: Optional[Pair] = None, enumeration_budget: Optional[int] = None,
              tree_budget: Optional[int] = None) -> LearnResult:
    """
    Learn an eps-optimal policy with probability at least 1 - delta.

    Half of eps pays for truncating the objective to horizon H, half for
    estimating the transition rows.

    Args:
        session: Sampling access to the environment
        objective: Objective over the session MDP's (state, action) pairs
        eps: Accuracy in (0, 1)
        delta: Failure probability in (0, 1)
        rep_symbol: Repetition pair used to extend length-H histories
        enumeration_budget: Cap for modulus and zero-reward enumerations
        tree_budget: Cap on lifted-tree decision nodes

    Returns:
        LearnResult with the policy and the run's accounting
    """
    eps, delta = Fraction(eps), Fraction(delta)
    if not 0 < eps < 1 or not 0 < delta < 1:
        raise ValidationError(f"eps and delta must lie in (0, 1), got eps={eps}, delta={delta}")
    mdp = session.mdp
    if objective.alphabet != mdp.pairs:
        raise ValidationError(f"Objective {objective.name} is not over the MDP's (state, action) pairs")

    start_samples = session.samples
    if eps >= 2 * objective.value_bound:
        logger.info("eps covers the whole value range; returning the uniform policy")
        return LearnResult(UniformPolicy(mdp.actions), 0, 0, 0, 0, 0, None, shortcut='degenerate')

    enumeration_cap = enumeration_budget if enumeration_budget is not None else config.enumeration_budget
    truncated = truncate_objective(objective, eps / 2, rep_symbol, enumeration_cap)
    horizon = truncated.horizon

    if objective.value_bound == 0 or _all_leaves_zero(truncated, enumeration_cap):
        logger.info("Truncated objective is identically zero; skipping sampling")
        return LearnResult(TablePolicy(mdp.actions, {}), horizon, truncated.n, 0, 0, 0,
                           Fraction(0), shortcut='zero')

    per_row = samples_per_row(eps, delta, horizon, objective.value_bound, len(mdp.states), len(mdp.actions),
                              truncated.n)
    minimum = per_row * len(mdp.actions)
    if minimum > session.budget - session.samples:
        raise BudgetExceeded('environment samples', session.budget, required=minimum, last_horizon=horizon)
    logger.info(f"Learning at H={horizon}, n={truncated.n}: {per_row} samples per row")

    counts = collect_counts(session, horizon, per_row)
    model = empirical_mdp(counts, mdp)
    policy, value = exact_plan(LiftedMdp(model, truncated), tree_budget)
    return LearnResult(policy, horizon, truncated.n, per_row, len(counts),
                       session.samples - start_samples, value)


def rl_general_objective(eps: Fraction, delta: Fraction, objective: ComputableObjective,
                         session: SamplingSession, labeling: LabelingFunction, **kwargs) -> Policy:
    """Lift an environment-generic objective through the labeling and learn a policy for it."""
    lifted_objective = compose_with_labeling(objective, labeling)
    return pac_learn(session, lifted_objective, eps, delta, **kwargs).policy
