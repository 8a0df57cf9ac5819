"""
Command-line entry point: ``python -m mdpo <command> [flags]``.

Commands: gen-data, train, evolve, landscape, verify-theorem, eval, replay.
Errors are reported as one line ``error: <ErrorClass>: <message>`` on stderr,
with exit status 2 for configuration and file-format errors and 1 otherwise.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from mdpo.analysis import grid_axis, landscape, mirror_solutions, write_landscape, write_trace_overlay
from mdpo.artifacts import atomic_write_text, write_frame, write_manifest
from mdpo.config import ExperimentConfig, load_config
from mdpo.envs import ChainEnv, policy_value
from mdpo.errors import ConfigurationError, DatasetFormatError, MdpoError, NumericalError
from mdpo.evolution import FitnessSpec, evolve, final_mean
from mdpo.lossnet import LossNetParams, init_params, save_params
from mdpo.objectives import ObjectiveKind, parse_objective
from mdpo.policies import TabularPolicy
from mdpo.potentials import OmegaPotential
from mdpo.preferences import REFERENCE, read_dataset, write_dataset
from mdpo.seeding import derive_rng, derive_seed
from mdpo.training import resolve_workers, run_seeds, summarize

logger = logging.getLogger('mdpo')

LOG_LEVEL_ENV = 'MDPO_LOG_LEVEL'
THEOREM_TOLERANCE = 1e-4


def _config(args):
    config = load_config(args.config) if getattr(args, 'config', None) else ExperimentConfig.default()
    if getattr(args, 'seed', None) is not None:
        config = config.with_overrides('experiment', seed=args.seed)
    return config


def _dataset_and_env(args, config):
    if getattr(args, 'data', None):
        try:
            dataset = read_dataset(args.data)
        except OSError as exc:
            raise ConfigurationError(f'cannot read dataset {args.data!r}: {exc.strerror}') from None
        return dataset, ChainEnv.from_spec(dataset.provenance['env'])
    return config.build_dataset(), config.env()


def _reference_policy(dataset, config):
    logits = dataset.provenance.get('policies', {}).get(REFERENCE)
    return TabularPolicy(logits) if logits is not None else config.reference()


def _finish(args, out_dir, command, config, seeds, artifacts, name='manifest.json'):
    write_manifest(out_dir, command, args.argv, config.to_dict(), seeds, artifacts, name=name)


# -- commands ---------------------------------------------------------------------

def cmd_gen_data(args):
    config = _config(args)
    config = config.with_overrides('dataset', mode=args.mode, size=args.size, noise=args.noise)
    config = config.with_overrides('judge', accuracy=args.judge_accuracy)
    dataset = config.build_dataset()
    write_dataset(dataset, args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    stem = os.path.splitext(os.path.basename(args.out))[0]
    _finish(args, out_dir, 'gen-data', config, {'dataset': config.dataset_seed(), 'noise': config.noise_seed()},
            [args.out], name=f'{stem}.manifest.json')
    counts = {'/'.join(k): v for k, v in sorted(dataset.source_pair_counts().items())}
    print(f'{len(dataset)} rows ({config["dataset"]["mode"]}, noise {config["dataset"]["noise"]}): {counts}')
    return 0


def cmd_train(args):
    config = _config(args)
    config = config.with_overrides('trainer', seeds=args.seeds, init=args.init, raw_prob=args.raw_prob or None)
    config = config.with_overrides('objective', name=args.objective)
    dataset, env = _dataset_and_env(args, config)
    objective = config.objective()
    t = config['trainer']
    seeds = config.train_seeds()
    reference = _reference_policy(dataset, config) if t['init'] == 'reference' else None
    frame, outcomes = run_seeds(env, dataset, objective, config.trainer_hyper(), seeds, t['init'], reference,
                                t['evaluation'], t['episodes'])

    os.makedirs(args.out, exist_ok=True)
    artifacts = []
    mean, stderr = summarize(frame['value'])
    footer = pd.DataFrame([{'seed': 'mean', 'value': mean}, {'seed': 'stderr', 'value': stderr}])
    summary_path = os.path.join(args.out, 'summary.csv')
    write_frame(pd.concat([frame, footer], ignore_index=True), summary_path,
                header=f'# objective={objective.identifier},rows={len(dataset)},horizon={dataset.horizon}')
    artifacts.append(summary_path)
    for outcome in outcomes:
        path = os.path.join(args.out, f'policy_{outcome.seed}.json')
        atomic_write_text(path, outcome.policy.to_json() + '\n')
        artifacts.append(path)
    trace_path = os.path.join(args.out, 'trace.csv')
    write_trace_overlay(outcomes[0].trace, trace_path)
    artifacts.append(trace_path)
    _finish(args, args.out, 'train', config, {'train': seeds}, artifacts)
    print(f'{objective.identifier}: mean value {mean:.4f} (stderr {stderr:.4f}) over {len(seeds)} seeds')
    return 0


def cmd_evolve(args):
    config = _config(args)
    config = config.with_overrides('es', generations=args.generations, population=args.population,
                                   shaping='raw' if args.raw_fitness else None)
    dataset, env = _dataset_and_env(args, config)
    es = config['es']
    t = config['trainer']
    reference = _reference_policy(dataset, config) if t['init'] == 'reference' else None
    spec = FitnessSpec(env, dataset, config.trainer_hyper(), ObjectiveKind(es['kind']), config['objective']['beta'],
                       es['inner_seeds'], t['evaluation'], t['episodes'], t['init'], reference)
    cfg = config.es_config(spec)
    if es['start'] == 'orpo':
        zeta0 = LossNetParams.orpo_equivalent(es['temporal'])
    else:
        zeta0 = init_params(derive_rng(config.seed, 'lossnet-init'), es['temporal'])
    best, state = evolve(cfg, zeta0, workers=resolve_workers())

    os.makedirs(args.out, exist_ok=True)
    history_path = os.path.join(args.out, 'history.csv')
    best_path = os.path.join(args.out, 'best_zeta.json')
    final_path = os.path.join(args.out, 'final_zeta.json')
    write_frame(state.history_frame(), history_path,
                header=f'# population={cfg.population},dimension={zeta0.dimension(zeta0.temporal)}')
    save_params(best, best_path)
    save_params(final_mean(state, zeta0), final_path)
    _finish(args, args.out, 'evolve', config, {'es': cfg.seed}, [history_path, best_path, final_path])
    print(f'best fitness {state.best_fitness:.4f} after {state.generation} generations')
    return 0


def cmd_landscape(args):
    objective = parse_objective(args.objective, lam=args.lam, beta=args.beta)
    axis = grid_axis(args.grid_low, args.grid_high, args.points)
    os.makedirs(args.out, exist_ok=True)
    artifacts = []
    for t in args.t:
        grid = landscape(objective, axis, axis, t)
        path = os.path.join(args.out, f'landscape_t{t:g}.csv')
        write_landscape(grid, path)
        artifacts.append(path)
    _finish(args, args.out, 'landscape', ExperimentConfig.default(), {}, artifacts)
    return 0


def cmd_verify_theorem(args):
    potential = OmegaPotential.from_name(args.potential)
    cases = []
    if args.random_envs:
        rng = np.random.default_rng(derive_seed(args.seed or 0, 'theorem'))
        for _ in range(args.random_envs):
            env = ChainEnv.random_tiny(rng)
            cases.append((env, TabularPolicy.random(env.num_states, env.num_actions, rng, std=0.5)))
    else:
        cases.append((ChainEnv(1, 2, 1), TabularPolicy.uniform(1, 2)))

    rows = []
    for k, (env, ref) in enumerate(cases):
        for s in mirror_solutions(env, potential, args.beta, ref):
            rows.append({'case': k, 'start_state': s.start_state, 'spread': s.spread, 'constant': s.constant,
                         'iterations': s.iterations})
    frame = pd.DataFrame(rows)
    spread = float(frame['spread'].max())
    print(f'{potential.name} beta={args.beta:g}: max residual spread {spread:.3e}')
    if args.out:
        path = os.path.join(args.out, 'theorem.csv')
        write_frame(frame, path)
        _finish(args, args.out, 'verify-theorem', ExperimentConfig.default(), {'theorem': args.seed}, [path])
    if spread > args.tolerance:
        raise NumericalError(f'residual spread {spread:.3e} above tolerance {args.tolerance:g}', spread)
    return 0


def cmd_eval(args):
    config = _config(args)
    env = config.env()
    try:
        policy = TabularPolicy.load(args.policy)
    except OSError as exc:
        raise ConfigurationError(f'cannot read policy {args.policy!r}: {exc.strerror}') from None
    exact, _ = policy_value(env, policy, 'exact')
    mc, stderr = policy_value(env, policy, 'monte_carlo', args.episodes, derive_rng(config.seed, 'eval'))
    print(f'exact value {exact:.6f}; monte carlo {mc:.4f} +/- {stderr:.4f} over {args.episodes} episodes')
    if args.out:
        path = os.path.join(args.out, 'eval.csv')
        write_frame(pd.DataFrame([{'mode': 'exact', 'value': exact, 'stderr': 0.0},
                                  {'mode': 'monte_carlo', 'value': mc, 'stderr': stderr}]), path)
        _finish(args, args.out, 'eval', config, {'eval': derive_seed(config.seed, 'eval')}, [path])
    return 0


def cmd_replay(args):
    try:
        with open(args.manifest, encoding='utf-8') as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(1, f'cannot read manifest {args.manifest!r}: {exc}') from None
    argv = manifest.get('argv')
    if not argv or argv[0] == 'replay':
        raise DatasetFormatError(1, f'manifest {args.manifest!r} has no replayable argv')
    logger.info('replaying %s', ' '.join(argv))
    return main(argv)


# -- parser -----------------------------------------------------------------------

def _probability(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f'{text} is not in [0, 1]')
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog='mdpo', description='Mirror-descent preference optimization toolkit.')
    parser.add_argument('--log-level', default=os.environ.get(LOG_LEVEL_ENV, 'INFO'),
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-data', help='generate a preference dataset')
    p.add_argument('--config')
    p.add_argument('--mode', choices=['base', 'shuffled'])
    p.add_argument('--noise', type=_probability)
    p.add_argument('--judge-accuracy', help='q@gap, e.g. 0.95@2.8')
    p.add_argument('--size', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser('train', help='train policies on a preference dataset')
    p.add_argument('--config')
    p.add_argument('--data')
    p.add_argument('--objective', help='orpo | dpo | gen_orpo:<path> | gen_dpo:<path>')
    p.add_argument('--seeds', type=int)
    p.add_argument('--init', choices=['scratch', 'reference'])
    p.add_argument('--raw-prob', action='store_true')
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('evolve', help='discover loss networks with OpenAI-ES')
    p.add_argument('--config')
    p.add_argument('--data')
    p.add_argument('--generations', type=int)
    p.add_argument('--population', type=int)
    p.add_argument('--raw-fitness', action='store_true')
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser('landscape', help='export gradient landscapes as CSV')
    p.add_argument('--objective', default='orpo')
    p.add_argument('--lam', type=float, default=0.5)
    p.add_argument('--beta', type=float, default=0.1)
    p.add_argument('--t', type=float, nargs='+', default=[0.0])
    p.add_argument('--grid-low', type=float, default=-8.0)
    p.add_argument('--grid-high', type=float, default=-0.02)
    p.add_argument('--points', type=int, default=64)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser('verify-theorem', help='check the mirror-map optimum numerically')
    p.add_argument('--potential', default='neg_entropy')
    p.add_argument('--beta', type=float, default=1.0)
    p.add_argument('--random-envs', type=int, default=0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--tolerance', type=float, default=THEOREM_TOLERANCE)
    p.add_argument('--out')
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser('eval', help='evaluate a policy checkpoint')
    p.add_argument('--config')
    p.add_argument('--policy', required=True)
    p.add_argument('--episodes', type=int, default=512)
    p.add_argument('--seed', type=int)
    p.add_argument('--out')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('replay', help='re-run the command recorded in a manifest')
    p.add_argument('manifest')
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    try:
        return args.func(args)
    except MdpoError as exc:
        print(f'error: {type(exc).__name__}: {exc}', file=sys.stderr)
        return 2 if isinstance(exc, (ConfigurationError, DatasetFormatError)) else 1
