import os

import numpy as np
import pandas as pd

from mdpo.envs import ChainEnv, make_reference_policy, policy_value
from mdpo.evolution import EsConfig, FitnessSpec, LossNetFitness, evolve
from mdpo.lossnet import LossNetParams, save_params
from mdpo.objectives import parse_objective
from mdpo.preferences import JudgeConfig, corrupt_noise, generate_dataset
from mdpo.seeding import derive_seed
from mdpo.training import TrainerHyper, run_seeds, summarize

RESULTS_DIR = 'results'
EXPERT_SKILL = 1.0
REFERENCE_SKILL = 0.43
GAP_SKILL = 0.86


def run_clean_experiment(objective='orpo'):
    return run_experiment(objective,
                          mode='base',
                          noise=0.0,
                          accuracy=0.95,
                          size=512,
                          runs=25)


def run_noise_experiment(objective='orpo', noise=0.3):
    return run_experiment(objective,
                          mode='base',
                          noise=noise,
                          accuracy=0.95,
                          size=512,
                          runs=25)


def run_shuffled_experiment(objective='orpo'):
    return run_experiment(objective,
                          mode='shuffled',
                          noise=0.0,
                          accuracy=0.95,
                          size=512,
                          runs=25)


def run_poor_judge_experiment(objective='orpo', accuracy=0.75):
    return run_experiment(objective,
                          mode='base',
                          noise=0.0,
                          accuracy=accuracy,
                          size=512,
                          runs=25)


def run_finetune_experiment(objective='orpo'):
    return run_experiment(objective,
                          mode='base',
                          noise=0.0,
                          accuracy=0.95,
                          size=128,
                          init='reference',
                          runs=25)


def sweep_noise_experiment(objectives=('orpo',), runs=25):
    noises = [0.0, 0.1, 0.2, 0.3]
    rows = []
    for objective in objectives:
        for noise in noises:
            print(f'Running objective={objective}, noise={noise}')
            stats = run_experiment(objective, mode='base', noise=noise, runs=runs)
            rows.append({'objective': objective, 'noise': noise, 'value': stats['MEAN_VALUE'],
                         'stderr': stats['STDERR'], 'relative': stats['RELATIVE']})
    return _save_table(pd.DataFrame(rows), 'noise_sweep.csv')


def sweep_judge_experiment(objectives=('orpo',), runs=25):
    accuracies = [0.95, 0.85, 0.75]
    rows = []
    for objective in objectives:
        for accuracy in accuracies:
            print(f'Running objective={objective}, judge accuracy={accuracy}')
            stats = run_experiment(objective, mode='base', accuracy=accuracy, runs=runs)
            rows.append({'objective': objective, 'accuracy': accuracy, 'eta': stats['ETA'],
                         'value': stats['MEAN_VALUE'], 'stderr': stats['STDERR'], 'relative': stats['RELATIVE']})
    return _save_table(pd.DataFrame(rows), 'judge_sweep.csv')


def run_discovery_experiment(mode='shuffled', population=16, generations=20, inner_seeds=3, baseline_runs=8,
                             temporal=False, seed=0):
    """
    ES from the ORPO-equivalent loss networks on one dataset protocol. The
    best candidate is saved to results/discovered_<mode>.json.
    """
    env, dataset, _ = _build(mode, 0.0, 0.95, 512, seed)
    fitness = LossNetFitness(FitnessSpec(env, dataset, TrainerHyper(), inner_seeds=inner_seeds))
    baseline, baseline_stderr = fitness.baseline([derive_seed(seed, 'baseline', i) for i in range(baseline_runs)])
    print(f'ORPO baseline fitness {baseline:.4f} +/- {baseline_stderr:.4f}')

    cfg = EsConfig(population=population, generations=generations, seed=derive_seed(seed, 'es'))
    best, state = evolve(cfg, LossNetParams.orpo_equivalent(temporal), fitness=fitness)
    history = state.history_frame()
    os.makedirs(RESULTS_DIR, exist_ok=True)
    checkpoint = os.path.join(RESULTS_DIR, f'discovered_{mode}.json')
    save_params(best, checkpoint)
    _save_table(history, f'discovery_{mode}_history.csv')

    _stats = {'BASELINE': baseline,
              'BASELINE_STDERR': baseline_stderr,
              'GEN0_MEAN': float(history['mean_fitness'][0]) if len(history) else np.nan,
              'BEST_FITNESS': state.best_fitness,
              'BEATS_BASELINE': bool(state.best_fitness >= baseline - baseline_stderr),
              'CHECKPOINT': checkpoint}
    return _stats


def run_transfer_experiment(checkpoint, runs=25):
    """
    Trains with a discovered loss on every dataset protocol next to ORPO.
    """
    settings = [('base', 0.0, 0.95), ('base', 0.3, 0.95), ('shuffled', 0.0, 0.95), ('base', 0.0, 0.75)]
    rows = []
    for mode, noise, accuracy in settings:
        for objective in ('orpo', f'gen_orpo:{checkpoint}'):
            print(f'Running mode={mode}, noise={noise}, accuracy={accuracy}, objective={objective}')
            stats = run_experiment(objective, mode=mode, noise=noise, accuracy=accuracy, runs=runs)
            rows.append({'mode': mode, 'noise': noise, 'accuracy': accuracy,
                         'objective': 'discovered' if objective != 'orpo' else 'orpo',
                         'value': stats['MEAN_VALUE'], 'stderr': stats['STDERR']})
    return _save_table(pd.DataFrame(rows), 'transfer.csv')


def _build(mode, noise, accuracy, size, seed, horizon=20, states=8):
    env = ChainEnv(states, 2, horizon)
    expert = make_reference_policy(env, EXPERT_SKILL)
    reference = make_reference_policy(env, REFERENCE_SKILL)
    judge = JudgeConfig.from_accuracy(accuracy, horizon * (1.0 - GAP_SKILL))
    dataset = generate_dataset(env, expert, reference, size, mode, judge, derive_seed(seed, 'dataset'),
                               skills={'expert': EXPERT_SKILL, 'reference': REFERENCE_SKILL})
    if noise > 0.0:
        dataset = corrupt_noise(dataset, noise, derive_seed(seed, 'noise'))
    return env, dataset, reference


def _save_table(frame, name):
    os.makedirs(RESULTS_DIR, exist_ok=True)
    frame.to_csv(os.path.join(RESULTS_DIR, name), index=False)
    print(frame.to_string(index=False))
    return frame


def run_experiment(objective, mode='base', noise=0.0, accuracy=0.95, size=512, init='scratch', runs=25,
                   hyper=None, seed=0):
    if hyper is None:
        hyper = TrainerHyper()
    env, dataset, reference = _build(mode, noise, accuracy, size, seed)
    spec = parse_objective(objective, lam=hyper.lam)
    seeds = [derive_seed(seed, 'train', i) for i in range(runs)]
    frame, _ = run_seeds(env, dataset, spec, hyper, seeds, init, reference if init == 'reference' else None)

    expert_value, _ = policy_value(env, make_reference_policy(env, EXPERT_SKILL))
    mean, stderr = summarize(frame['value'])
    _stats = {'MEAN_VALUE': mean,
              'STDERR': stderr,
              'EXPERT_VALUE': expert_value,
              'RELATIVE': mean / expert_value,
              'FINAL_LOSS': float(frame['final_loss'].mean()),
              'ETA': dataset.provenance['judge_eta']}
    _stats['RELATIVE'] = int(1e5 * _stats['RELATIVE']) / 1e5
    return _stats


if __name__ == "__main__":
    # print(run_clean_experiment())
    # print(run_noise_experiment())
    # print(run_shuffled_experiment())
    # print(run_finetune_experiment())
    # sweep_judge_experiment()
    # stats = run_discovery_experiment('shuffled')
    # run_transfer_experiment(stats['CHECKPOINT'])
    sweep_noise_experiment(objectives=('orpo', 'dpo'))
