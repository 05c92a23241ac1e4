#!/usr/bin/env python3
"""
PAC Objectives - evaluate, truncate, plan and learn computable RL objectives.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from config import config
from environment import Mdp, SamplingSession, parse_grid, parse_mdp
from errors import ObjectiveError, ValidationError
from foundations import BoundedProbe, format_decimal, format_lasso, format_rational, parse_lasso, parse_rational
from gltl import gltl_objective, parse_gltl
from ldba import bozkurt_objective, parse_ldba
from objective_core import (ComputableObjective, LabelingFunction, compose_with_labeling, modulus_of_continuity,
                            n_for_eps, truncate_objective)
from pac_rl import LiftedMdp, evaluate_policy, exact_plan, pac_learn
from property_checks import PropertyChecker
from reward_machine import parse_srm, srm_objective

logger = logging.getLogger(__name__)

OBJECTIVE_KINDS = ('srm', 'ldba', 'gltl')
ENVIRONMENT_KINDS = ('grid', 'mdp')


def setup_logging():
    """Configure logging; reports own stdout, so log records go to stderr."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if config.log_file:
        handlers.append(logging.FileHandler(config.log_file))
    logging.basicConfig(
        level=getattr(logging, config.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


@dataclass
class RunConfig:
    """Fully resolved settings of one command-line run."""

    command: str
    objective_file: Optional[str] = None
    kind: Optional[str] = None
    manifest: Optional[str] = None
    environment_file: Optional[str] = None
    environment_kind: Optional[str] = None
    word: Optional[str] = None
    n: Optional[int] = None
    eps: Optional[Fraction] = None
    delta: Optional[Fraction] = None
    seed: int = 0
    budgets: Dict[str, int] = field(default_factory=dict)
    suites: List[str] = field(default_factory=list)
    trials: Optional[int] = None
    out: Optional[str] = None

    def to_report(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ('eps', 'delta'):
            if data[key] is not None:
                data[key] = format_rational(data[key])
        return {key: value for key, value in data.items() if value not in (None, [], {})}


def rational_report(value: Fraction) -> Dict[str, str]:
    return {'exact': format_rational(value), 'decimal': format_decimal(value, config.decimal_digits)}


def infer_kind(path: str, kinds: Tuple[str, ...]) -> str:
    extension = os.path.splitext(path)[1].lstrip('.')
    if extension not in kinds:
        raise ValidationError(f"Cannot tell the kind of {path}; pass one of {list(kinds)}")
    return extension


def read_text(path: str) -> str:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return handle.read()
    except OSError as e:
        raise ValidationError(f"Cannot read {path}: {e}")


def load_objective(path: str, kind: str, budget: Optional[int] = None,
                   propositions: Optional[Tuple[str, ...]] = None) -> ComputableObjective:
    """Parse an objective file of the given kind into its computable objective."""
    text = read_text(path)
    if kind == 'srm':
        return srm_objective(parse_srm(text))
    if kind == 'ldba':
        return bozkurt_objective(parse_ldba(text), budget)
    if kind == 'gltl':
        return gltl_objective(parse_gltl(text), propositions, budget)
    raise ValidationError(f"Unknown objective kind {kind!r}")


def load_environment(path: str, kind: str) -> Tuple[Mdp, LabelingFunction]:
    text = read_text(path)
    if kind == 'grid':
        return parse_grid(text)
    if kind == 'mdp':
        mdp, labeling = parse_mdp(text)
        if labeling is None:
            raise ValidationError(f"{path} declares no state labels")
        return mdp, labeling
    raise ValidationError(f"Unknown environment kind {kind!r}")


def resolve_manifest(run: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Fill a plan/learn run from its manifest; command-line flags win."""
    try:
        document = json.loads(read_text(run.manifest))
    except json.JSONDecodeError as e:
        raise ValidationError(f"Manifest {run.manifest} is not valid JSON: {e}")
    base = os.path.dirname(os.path.abspath(run.manifest))

    try:
        objective = document['objective']
        environment = document['environment']
        run.objective_file = os.path.join(base, objective['file'])
        run.kind = args.kind or objective.get('kind') or infer_kind(run.objective_file, OBJECTIVE_KINDS)
        run.environment_file = os.path.join(base, environment['file'])
        run.environment_kind = environment.get('kind') or infer_kind(run.environment_file, ENVIRONMENT_KINDS)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Manifest {run.manifest} lacks {e}")

    run.eps = args.eps if args.eps is not None else _manifest_rational(document, 'eps')
    run.delta = args.delta if args.delta is not None else _manifest_rational(document, 'delta')
    run.seed = args.seed if args.seed is not None else int(document.get('seed', config.default_seed))
    budgets = document.get('budgets', {})
    run.budgets = {
        'enumeration': args.budget if args.budget is not None
        else int(budgets.get('enumeration', config.enumeration_budget)),
        'tree': int(budgets.get('tree', config.tree_budget)),
        'samples': int(budgets.get('samples', config.sample_budget)),
    }
    return run


def _manifest_rational(document: Dict[str, Any], key: str) -> Optional[Fraction]:
    value = document.get(key)
    return parse_rational(str(value)) if value is not None else None


class ExperimentRunner:
    """Runs one subcommand and builds its report."""

    def __init__(self, run: RunConfig):
        self.run = run

    def execute(self) -> Dict[str, Any]:
        handler = getattr(self, f"cmd_{self.run.command}")
        report = handler()
        report['command'] = self.run.command
        report['config'] = self.run.to_report()
        return report

    def _objective(self, propositions: Optional[Tuple[str, ...]] = None) -> ComputableObjective:
        return load_objective(self.run.objective_file, self.run.kind, self.run.budgets.get('enumeration'),
                              propositions)

    def cmd_eval(self) -> Dict[str, Any]:
        objective = self._objective()
        word = parse_lasso(self.run.word, objective.alphabet)
        probe = BoundedProbe(word)
        value = objective.approx(probe, self.run.n)
        return {
            'word': format_lasso(word),
            'n': self.run.n,
            'value': rational_report(value),
            'horizon': objective.horizon(self.run.n),
            'max_index_read': probe.max_index_read,
        }

    def cmd_modulus(self) -> Dict[str, Any]:
        objective = self._objective()
        n = n_for_eps(self.run.eps)
        horizon = modulus_of_continuity(objective, self.run.eps, self.run.budgets.get('enumeration'))
        return {'eps': format_rational(self.run.eps), 'n': n, 'horizon': horizon,
                'declared_horizon': objective.horizon(n)}

    def _lifted_problem(self):
        mdp, labeling = load_environment(self.run.environment_file, self.run.environment_kind)
        propositions = labeling.codomain.propositions if self.run.kind == 'gltl' else None
        objective = compose_with_labeling(self._objective(propositions), labeling)
        if self.run.eps is None:
            raise ValidationError("eps is required")
        truncated = truncate_objective(objective, self.run.eps / 2, budget=self.run.budgets['enumeration'])
        return mdp, objective, truncated

    def cmd_plan(self) -> Dict[str, Any]:
        mdp, _, truncated = self._lifted_problem()
        lifted = LiftedMdp(mdp, truncated)
        policy, value = exact_plan(lifted, self.run.budgets['tree'])
        return {
            'H': truncated.horizon,
            'n': truncated.n,
            'planner_value_exact': rational_report(value),
            'decision_nodes': len(policy),
        }

    def cmd_learn(self) -> Dict[str, Any]:
        if self.run.delta is None:
            raise ValidationError("delta is required")
        mdp, objective, truncated = self._lifted_problem()
        session = SamplingSession(mdp, self.run.seed, self.run.budgets['samples'],
                                  keep_transcript=False)
        result = pac_learn(session, objective, self.run.eps, self.run.delta,
                           enumeration_budget=self.run.budgets['enumeration'],
                           tree_budget=self.run.budgets['tree'])

        lifted = LiftedMdp(mdp, truncated)
        learned = evaluate_policy(lifted, result.policy)
        _, optimum = exact_plan(lifted, self.run.budgets['tree'])
        report = {
            'H': truncated.horizon,
            'n': truncated.n,
            'samples_used': result.samples_used,
            'samples_per_row': result.samples_per_row,
            'rows_estimated': result.rows_estimated,
            'learned_value_exact': rational_report(learned),
            'planner_value_exact': rational_report(optimum),
            'gap': rational_report(optimum - learned),
            'policy': serialize_policy(result.policy),
        }
        if result.shortcut:
            report['shortcut'] = result.shortcut
        return report

    def cmd_check(self) -> Dict[str, Any]:
        checker = PropertyChecker(self.run.seed, self.run.trials)
        return checker.run_all(self.run.suites or None)


def serialize_policy(policy) -> Any:
    table = getattr(policy, 'table', None)
    if table is None:
        return {'kind': type(policy).__name__, 'actions': [str(action) for action in policy.actions]}
    entries = []
    for (pairs, state), action in table.items():
        entries.append({
            'history': [[str(s), str(a)] for s, a in pairs],
            'state': str(state),
            'action': str(action),
        })
    entries.sort(key=lambda entry: (len(entry['history']), json.dumps(entry, sort_keys=True)))
    return {'kind': 'table', 'default_action': str(policy.actions[0]), 'entries': entries}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pac-objectives', description=__doc__.strip())
    subcommands = parser.add_subparsers(dest='command', required=True)

    def common(sub):
        sub.add_argument('--seed', type=int, default=None, help='random seed')
        sub.add_argument('--budget', type=int, default=None, help='enumeration budget')
        sub.add_argument('--out', default=None, help='write the report here instead of stdout')

    def rational(text: str) -> Fraction:
        try:
            return parse_rational(text)
        except ObjectiveError as e:
            raise argparse.ArgumentTypeError(str(e))

    eval_cmd = subcommands.add_parser('eval', help='approximate an objective on a lasso word')
    eval_cmd.add_argument('objective')
    eval_cmd.add_argument('word', help='lasso text such as "{};{}^{goal}"')
    eval_cmd.add_argument('--kind', choices=OBJECTIVE_KINDS)
    eval_cmd.add_argument('--n', type=int, required=True)
    common(eval_cmd)

    modulus_cmd = subcommands.add_parser('modulus', help='modulus of continuity at eps')
    modulus_cmd.add_argument('objective')
    modulus_cmd.add_argument('--kind', choices=OBJECTIVE_KINDS)
    modulus_cmd.add_argument('--eps', type=rational, required=True)
    common(modulus_cmd)

    for name, help_text in (('plan', 'optimal policy for a known model'),
                            ('learn', 'PAC-learn a policy from samples')):
        sub = subcommands.add_parser(name, help=help_text)
        sub.add_argument('manifest')
        sub.add_argument('--kind', choices=OBJECTIVE_KINDS)
        sub.add_argument('--eps', type=rational)
        sub.add_argument('--delta', type=rational)
        common(sub)

    check_cmd = subcommands.add_parser('check', help='run the randomized property suites')
    check_cmd.add_argument('suites', nargs='*')
    check_cmd.add_argument('--trials', type=int, default=None)
    common(check_cmd)
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    """Validate flags and turn them into a RunConfig before any computation."""
    run = RunConfig(command=args.command, out=args.out,
                    seed=args.seed if args.seed is not None else config.default_seed)
    if args.command in ('eval', 'modulus'):
        run.objective_file = args.objective
        run.kind = args.kind or infer_kind(args.objective, OBJECTIVE_KINDS)
        run.budgets = {'enumeration': args.budget if args.budget is not None else config.enumeration_budget}
        if args.command == 'eval':
            if args.n < 0:
                raise ValidationError(f"--n must be non-negative, got {args.n}")
            run.word, run.n = args.word, args.n
        else:
            if args.eps <= 0:
                raise ValidationError(f"--eps must be positive, got {args.eps}")
            run.eps = args.eps
    elif args.command in ('plan', 'learn'):
        run.manifest = args.manifest
        resolve_manifest(run, args)
        if run.eps is None or not 0 < run.eps < 1:
            raise ValidationError(f"eps must lie in (0, 1), got {run.eps}")
        if args.command == 'learn' and (run.delta is None or not 0 < run.delta < 1):
            raise ValidationError(f"delta must lie in (0, 1), got {run.delta}")
    else:
        run.suites = list(args.suites)
        run.trials = args.trials if args.trials is not None else config.check_trials
        if run.trials < 1:
            raise ValidationError(f"--trials must be positive, got {run.trials}")
    return run


def emit(report: Dict[str, Any], out: Optional[str]):
    text = json.dumps(report, indent=2, sort_keys=True) + '\n'
    if out:
        with open(out, 'w', encoding='utf-8') as handle:
            handle.write(text)
        logger.info(f"Report written to {out}")
    else:
        sys.stdout.write(text)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    setup_logging()
    if not config.validate():
        logger.error("Invalid configuration. Please check environment variables.")
        return ValidationError.exit_code

    args = build_parser().parse_args(argv)
    try:
        run = resolve(args)
        report = ExperimentRunner(run).execute()
    except ObjectiveError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return 4

    emit(report, run.out)
    if run.command == 'check' and report['status'] != 'healthy':
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
