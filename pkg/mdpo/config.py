"""
Experiment configuration: INI files read with configparser.

Every section and key is declared in SCHEMA with its type and default.
Unknown sections or keys, unparsable values and invalid combinations are
collected and raised together as one ConfigurationError.
"""
import configparser
import logging
from dataclasses import dataclass, replace

from mdpo.envs import ChainEnv, make_reference_policy
from mdpo.errors import ConfigurationError
from mdpo.evolution import EsConfig
from mdpo.preferences import JudgeConfig, corrupt_noise, generate_dataset
from mdpo.seeding import derive_seed
from mdpo.training import TrainerHyper

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
DEFAULT_JUDGE_ACCURACY = 0.95
DEFAULT_GAP_SKILL = 0.86
DEFAULT_DATASET_SIZES = {'scratch': 512, 'reference': 128}

SCHEMA = {
    'experiment': {'version': (int, CONFIG_VERSION), 'seed': (int, 0)},
    'env': {'states': (int, 8), 'actions': (int, 2), 'horizon': (int, 20), 'reward': (str, 'advance_unit')},
    'policies': {'expert_skill': (float, 1.0), 'reference_skill': (float, 0.43)},
    'judge': {'accuracy': (str, None), 'eta': (float, None)},
    'dataset': {'mode': (str, 'base'), 'size': (int, None), 'noise': (float, 0.0), 'seed': (int, None)},
    'objective': {'name': (str, 'orpo'), 'temporal': (bool, None), 'beta': (float, 0.1)},
    'trainer': {'epochs': (int, 12), 'minibatch': (int, 2), 'learning_rate': (float, 1e-3),
                'max_grad_norm': (float, 1.3), 'lambda': (float, 0.5), 'init': (str, 'scratch'),
                'raw_prob': (bool, False), 'seeds': (int, 25), 'evaluation': (str, 'exact'),
                'episodes': (int, 512)},
    'es': {'population': (int, 256), 'generations': (int, 128), 'sigma_init': (float, 0.03),
           'sigma_decay': (float, 0.999), 'learning_rate': (float, 0.02), 'shaping': (str, 'standardize'),
           'inner_seeds': (int, 3), 'start': (str, 'orpo'), 'temporal': (bool, False), 'kind': (str, 'gen_orpo')},
    'output': {'dir': (str, 'out')},
}

CHOICES = {
    ('dataset', 'mode'): ('base', 'shuffled'),
    ('trainer', 'init'): ('scratch', 'reference'),
    ('trainer', 'evaluation'): ('exact', 'monte_carlo'),
    ('es', 'shaping'): ('standardize', 'raw'),
    ('es', 'start'): ('orpo', 'random'),
    ('es', 'kind'): ('gen_orpo', 'gen_dpo'),
}

_BOOLEANS = {'true': True, 'yes': True, 'on': True, '1': True, 'false': False, 'no': False, 'off': False, '0': False}


def _convert(kind, raw):
    if kind is bool:
        try:
            return _BOOLEANS[raw.strip().lower()]
        except KeyError:
            raise ValueError(f'not a boolean: {raw!r}') from None
    return kind(raw.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully resolved configuration, one dict of values per section.
    """
    values: dict

    @staticmethod
    def default():
        return ExperimentConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    def __getitem__(self, section):
        return self.values[section]

    def to_dict(self):
        return {s: dict(v) for s, v in self.values.items()}

    def with_overrides(self, section, **overrides):
        """
        A copy with the given keys replaced; None values are ignored.
        """
        values = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in SCHEMA[section]:
                raise ConfigurationError(f'unknown key {section}.{key}')
            values[section][key] = value
        config = replace(self, values=values)
        config.validate()
        return config

    @property
    def seed(self):
        return self.values['experiment']['seed']

    # -- builders -----------------------------------------------------------------

    def env(self):
        e = self.values['env']
        return ChainEnv(e['states'], e['actions'], e['horizon'], e['reward'])

    def expert(self):
        return make_reference_policy(self.env(), self.values['policies']['expert_skill'])

    def reference(self):
        return make_reference_policy(self.env(), self.values['policies']['reference_skill'])

    def judge(self):
        j = self.values['judge']
        if j['eta'] is not None:
            return JudgeConfig(j['eta'])
        if j['accuracy'] is not None:
            return JudgeConfig.parse(j['accuracy'])
        gap = self.values['env']['horizon'] * (1.0 - DEFAULT_GAP_SKILL)
        return JudgeConfig.from_accuracy(DEFAULT_JUDGE_ACCURACY, gap)

    def dataset_size(self):
        """
        The configured size, else 512 rows from scratch and 128 when training
        starts from the reference policy.
        """
        size = self.values['dataset']['size']
        return DEFAULT_DATASET_SIZES.get(self.values['trainer']['init'], 512) if size is None else size

    def dataset_seed(self):
        seed = self.values['dataset']['seed']
        return derive_seed(self.seed, 'dataset') if seed is None else seed

    def noise_seed(self):
        return derive_seed(self.dataset_seed(), 'noise')

    def build_dataset(self):
        """
        Generates the configured dataset and applies label noise if requested.
        """
        d = self.values['dataset']
        p = self.values['policies']
        dataset = generate_dataset(self.env(), self.expert(), self.reference(), self.dataset_size(), d['mode'], self.judge(),
                                   self.dataset_seed(),
                                   skills={'expert': p['expert_skill'], 'reference': p['reference_skill']})
        if d['noise'] > 0.0:
            dataset = corrupt_noise(dataset, d['noise'], self.noise_seed())
        return dataset

    def trainer_hyper(self):
        t = self.values['trainer']
        return TrainerHyper(epochs=t['epochs'], minibatch=t['minibatch'], learning_rate=t['learning_rate'],
                            max_grad_norm=t['max_grad_norm'], lam=t['lambda'], raw_prob=t['raw_prob'])

    def train_seeds(self):
        return [derive_seed(self.seed, 'train', i) for i in range(self.values['trainer']['seeds'])]

    def objective(self):
        from mdpo.objectives import parse_objective
        o = self.values['objective']
        return parse_objective(o['name'], lam=self.values['trainer']['lambda'], beta=o['beta'], temporal=o['temporal'])

    def es_config(self, fitness_spec=None):
        es = self.values['es']
        return EsConfig(population=es['population'], generations=es['generations'], sigma_init=es['sigma_init'],
                        sigma_decay=es['sigma_decay'], learning_rate=es['learning_rate'],
                        seed=derive_seed(self.seed, 'es'), shaping=es['shaping'], fitness_spec=fitness_spec)

    # -- validation ---------------------------------------------------------------

    def validate(self):
        violations = []
        if self.values['experiment']['version'] != CONFIG_VERSION:
            violations.append(f'experiment.version must be {CONFIG_VERSION}, got {self.values["experiment"]["version"]}')
        for (section, key), allowed in CHOICES.items():
            if self.values[section][key] not in allowed:
                violations.append(f'{section}.{key} must be one of {allowed}, got {self.values[section][key]!r}')
        if self.values['judge']['eta'] is not None and self.values['judge']['accuracy'] is not None:
            violations.append('judge.eta and judge.accuracy are mutually exclusive')
        d = self.values['dataset']
        size = self.dataset_size()
        if size <= 0:
            violations.append(f'dataset.size must be positive, got {size}')
        elif d['mode'] == 'shuffled' and size % 4:
            violations.append(f'dataset.size must be divisible by 4 in shuffled mode, got {size}')
        if not 0.0 <= d['noise'] <= 1.0:
            violations.append(f'dataset.noise must lie in [0, 1], got {d["noise"]}')
        for key in ('expert_skill', 'reference_skill'):
            if not 0.0 <= self.values['policies'][key] <= 1.0:
                violations.append(f'policies.{key} must lie in [0, 1], got {self.values["policies"][key]}')
        if self.values['trainer']['seeds'] < 1:
            violations.append(f'trainer.seeds must be positive, got {self.values["trainer"]["seeds"]}')
        if self.values['es']['inner_seeds'] < 1:
            violations.append(f'es.inner_seeds must be positive, got {self.values["es"]["inner_seeds"]}')
        for build in (self.env, self.judge, self.trainer_hyper, self.es_config):
            try:
                build()
            except ConfigurationError as exc:
                violations.extend(exc.violations)
        if violations:
            raise ConfigurationError(violations)


def parse_config(text, source='<string>'):
    parser = configparser.ConfigParser(interpolation=None, default_section='__defaults__')
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f'{source}: {exc}') from None

    config = ExperimentConfig.default()
    values = config.to_dict()
    violations = []
    if not parser.has_option('experiment', 'version'):
        violations.append('experiment.version is required')
    for section in parser.sections():
        if section not in SCHEMA:
            violations.append(f'unknown section [{section}]')
            continue
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                violations.append(f'unknown key {section}.{key}')
                continue
            kind = SCHEMA[section][key][0]
            try:
                values[section][key] = _convert(kind, raw)
            except ValueError:
                violations.append(f'{section}.{key}: expected {kind.__name__}, got {raw!r}')
    if violations:
        raise ConfigurationError(violations)
    config = ExperimentConfig(values)
    config.validate()
    logger.debug('loaded configuration from %s', source)
    return config


def load_config(path):
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as exc:
        raise ConfigurationError(f'cannot read config {path!r}: {exc.strerror}') from None
    return parse_config(text, source=path)
