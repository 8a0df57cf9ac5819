"""
Preference datasets: generation protocols, label-noise corruption and the
JSON-lines file format.

File layout: line 1 is a header object carrying the format tag, version, row
count and provenance; every following line is one row.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Tuple

import numpy as np

from mdpo.envs import Trajectory, sample_start_states, sample_trajectories
from mdpo.errors import ConfigurationError, DatasetFormatError
from mdpo.preferences.judge import judge_prefers

logger = logging.getLogger(__name__)

FILE_FORMAT = 'mdpo-preferences'
FILE_VERSION = 1
EXPERT = 'expert'
REFERENCE = 'reference'
MODES = ('base', 'shuffled')


@dataclass(frozen=True)
class PreferenceRow:
    s0: int
    chosen: Trajectory
    rejected: Trajectory
    chosen_source: str
    rejected_source: str
    flipped: bool = False

    def __post_init__(self):
        if self.chosen.start_state != self.s0 or self.rejected.start_state != self.s0:
            raise ConfigurationError('chosen and rejected trajectories must start from s0')

    @property
    def meta(self):
        return {'chosen_source': self.chosen_source, 'rejected_source': self.rejected_source,
                'flipped': self.flipped}

    @property
    def source_pair(self):
        return tuple(sorted((self.chosen_source, self.rejected_source)))

    def swapped(self):
        return PreferenceRow(self.s0, self.rejected, self.chosen, self.rejected_source, self.chosen_source,
                             not self.flipped)


@dataclass(frozen=True)
class PreferenceDataset:
    rows: Tuple[PreferenceRow, ...]
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, index):
        return self.rows[index]

    @property
    def horizon(self):
        return len(self.rows[0].chosen) if self.rows else 0

    def source_pair_counts(self):
        counts = {}
        for row in self.rows:
            counts[row.source_pair] = counts.get(row.source_pair, 0) + 1
        return counts


def _orient(s0, tau_a, tau_b, source_a, source_b, judge, rng):
    if judge_prefers(judge, tau_a.cumulative_reward, tau_b.cumulative_reward, rng):
        return PreferenceRow(s0, tau_a, tau_b, source_a, source_b)
    return PreferenceRow(s0, tau_b, tau_a, source_b, source_a)


def generate_dataset(env, expert, reference, size, mode, judge, seed, skills=None):
    """
    Base mode pairs an expert rollout with a reference rollout from a shared
    start state. Shuffled mode uses exactly 25% expert-expert, 50%
    expert-reference and 25% reference-reference comparisons.
    """
    if size <= 0:
        raise ConfigurationError(f'dataset size must be positive, got {size}')
    if mode not in MODES:
        raise ConfigurationError(f'unknown dataset mode {mode!r}; expected one of {MODES}')
    if mode == 'shuffled' and size % 4 != 0:
        raise ConfigurationError(f'shuffled datasets need a size divisible by 4, got {size}')

    rng = np.random.default_rng(seed)
    if mode == 'base':
        pairs = [(EXPERT, REFERENCE)] * size
    else:
        quarter = size // 4
        pairs = [(EXPERT, EXPERT)] * quarter + [(EXPERT, REFERENCE)] * (2 * quarter) + \
                [(REFERENCE, REFERENCE)] * quarter
        pairs = [pairs[i] for i in rng.permutation(size)]

    policies = {EXPERT: expert, REFERENCE: reference}
    starts = sample_start_states(env, size, rng)
    first = {src: sample_trajectories(env, policies[src], starts, rng) for src in (EXPERT, REFERENCE)}
    second = {src: sample_trajectories(env, policies[src], starts, rng) for src in (EXPERT, REFERENCE)}

    rows = []
    for i, (source_a, source_b) in enumerate(pairs):
        tau_a = first[source_a][i]
        tau_b = second[source_b][i]
        rows.append(_orient(int(starts[i]), tau_a, tau_b, source_a, source_b, judge, rng))

    provenance = {'env': env.spec, 'policies': {
                      EXPERT: expert.logits.tolist(), REFERENCE: reference.logits.tolist()},
                  'judge_eta': judge.eta, 'mode': mode, 'size': size, 'noise': 0.0, 'seed': seed}
    if skills is not None:
        provenance['skills'] = dict(skills)
    logger.info('generated %s dataset with %d rows (eta=%.4g, seed=%s)', mode, size, judge.eta, seed)
    return PreferenceDataset(tuple(rows), provenance)


def corrupt_noise(dataset, p, seed):
    """
    Swaps chosen and rejected in exactly round(p * size) rows drawn without
    replacement.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f'noise level must lie in [0, 1], got {p}')
    rng = np.random.default_rng(seed)
    count = int(round(p * len(dataset)))
    flip = set(rng.choice(len(dataset), size=count, replace=False).tolist())
    rows = tuple(row.swapped() if i in flip else row for i, row in enumerate(dataset.rows))
    provenance = dict(dataset.provenance)
    provenance['noise'] = p
    provenance['noise_seed'] = seed
    provenance['noise_history'] = list(dataset.provenance.get('noise_history', [])) + [[p, seed]]
    return replace(dataset, rows=rows, provenance=provenance)


# -- file format ---------------------------------------------------------------------

def _trajectory_to_obj(tau):
    return {'states': list(tau.states), 'actions': list(tau.actions), 'reward': tau.cumulative_reward}


def _trajectory_from_obj(obj):
    return Trajectory(tuple(int(s) for s in obj['states']), tuple(int(a) for a in obj['actions']),
                      float(obj['reward']))


def dumps_dataset(dataset):
    lines = [json.dumps({'format': FILE_FORMAT, 'version': FILE_VERSION, 'size': len(dataset),
                         'provenance': dataset.provenance}, sort_keys=True)]
    for row in dataset.rows:
        lines.append(json.dumps({'s0': row.s0, 'chosen': _trajectory_to_obj(row.chosen),
                                 'rejected': _trajectory_to_obj(row.rejected), 'meta': row.meta},
                                sort_keys=True))
    return '\n'.join(lines) + '\n'


def _parse_header(line):
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(1, f'malformed header: {exc.msg}') from None
    if not isinstance(header, dict) or header.get('format') != FILE_FORMAT:
        raise DatasetFormatError(1, 'not a preference dataset file')
    if header.get('version') != FILE_VERSION:
        raise DatasetFormatError(1, f'unsupported dataset version {header.get("version")!r}')
    return header


def loads_dataset(text):
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError(1, 'empty file')
    header = _parse_header(lines[0])
    rows = []
    for number, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            meta = obj['meta']
            rows.append(PreferenceRow(int(obj['s0']), _trajectory_from_obj(obj['chosen']),
                                      _trajectory_from_obj(obj['rejected']), meta['chosen_source'],
                                      meta['rejected_source'], bool(meta['flipped'])))
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(number, f'malformed row: {exc.msg}') from None
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(number, f'malformed row: {exc!r}') from None
    if len(rows) != header.get('size'):
        raise DatasetFormatError(len(lines) + 1, f'expected {header.get("size")} rows, found {len(rows)}')
    return PreferenceDataset(tuple(rows), header['provenance'])


def write_dataset(dataset, path):
    from mdpo.artifacts import atomic_write_text
    atomic_write_text(path, dumps_dataset(dataset))


def read_dataset(path):
    with open(path, encoding='utf-8') as f:
        return loads_dataset(f.read())


def read_provenance(path):
    with open(path, encoding='utf-8') as f:
        return _parse_header(f.readline())['provenance']
