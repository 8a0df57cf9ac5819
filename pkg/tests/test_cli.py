import contextlib
import io
import json
import os
import shutil
import tempfile
import unittest

import pandas as pd

from mdpo.artifacts import file_sha256
from mdpo.cli import main

SMALL_CONFIG = """
[experiment]
version = 1
seed = 3

[env]
states = 4
horizon = 5

[dataset]
size = 16

[trainer]
epochs = 1
seeds = 2

[es]
population = 4
generations = 1
inner_seeds = 1
"""


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        status = main(['--log-level', 'WARNING'] + list(argv))
    return status, out.getvalue(), err.getvalue()


class TestCli(unittest.TestCase):

    # Runs before all tests
    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.mkdtemp()
        cls.config = os.path.join(cls.tmp, 'small.ini')
        with open(cls.config, 'w', encoding='utf-8') as f:
            f.write(SMALL_CONFIG)

    # Runs after all tests
    @classmethod
    def tearDownClass(cls) -> None:
        shutil.rmtree(cls.tmp)

    # Runs before each test
    def setUp(self) -> None:
        self.out = tempfile.mkdtemp(dir=self.tmp)

    def test_verify_theorem(self):
        status, stdout, _ = run('verify-theorem', '--potential', 'neg_entropy')
        self.assertEqual(status, 0)
        spread = float(stdout.strip().rsplit(' ', 1)[-1])
        self.assertLessEqual(spread, 1e-4)
        self.assertEqual(run('verify-theorem', '--potential', 'euclidean', '--beta', '4')[0], 0)
        self.assertEqual(run('verify-theorem', '--random-envs', '3', '--out', self.out)[0], 0)
        frame = pd.read_csv(os.path.join(self.out, 'theorem.csv'))
        self.assertTrue((frame['spread'] <= 1e-4).all())

    def test_verify_theorem_tolerance(self):
        status, _, stderr = run('verify-theorem', '--tolerance', '-1')
        self.assertEqual(status, 1)
        self.assertIn('error: NumericalError:', stderr)

    def test_shuffled_size_must_divide_by_four(self):
        status, _, stderr = run('gen-data', '--mode', 'shuffled', '--size', '510',
                                '--out', os.path.join(self.out, 'd.jsonl'))
        self.assertEqual(status, 2)
        self.assertIn('error: ConfigurationError:', stderr)
        self.assertIn('divisible by 4', stderr)
        self.assertFalse(os.path.exists(os.path.join(self.out, 'd.jsonl')))

    def test_gen_data_then_train(self):
        data = os.path.join(self.out, 'prefs.jsonl')
        status, stdout, _ = run('gen-data', '--config', self.config, '--mode', 'shuffled', '--noise', '0.25',
                                '--out', data)
        self.assertEqual(status, 0)
        self.assertIn('16 rows', stdout)
        manifest_path = os.path.join(self.out, 'prefs.manifest.json')
        with open(manifest_path) as f:
            manifest = json.load(f)
        self.assertEqual(manifest['artifacts'], {'prefs.jsonl': file_sha256(data)})

        train_dir = os.path.join(self.out, 'train')
        status, _, _ = run('train', '--config', self.config, '--data', data, '--seeds', '3', '--out', train_dir)
        self.assertEqual(status, 0)
        summary = pd.read_csv(os.path.join(train_dir, 'summary.csv'), comment='#')
        self.assertEqual(len(summary), 5)
        self.assertEqual(summary['seed'].tolist()[-2:], ['mean', 'stderr'])
        values = summary['value'][:3].astype(float)
        self.assertAlmostEqual(float(summary['value'][3]), values.mean(), places=9)
        trace = pd.read_csv(os.path.join(train_dir, 'trace.csv'))
        self.assertEqual(list(trace.columns), ['step', 'log_p_w', 'log_p_l', 't'])

        with open(os.path.join(train_dir, 'manifest.json')) as f:
            manifest = json.load(f)
        self.assertEqual(len(manifest['seeds']['train']), 3)
        policy = os.path.join(train_dir, f'policy_{manifest["seeds"]["train"][0]}.json')
        status, stdout, _ = run('eval', '--config', self.config, '--policy', policy, '--episodes', '64')
        self.assertEqual(status, 0)
        self.assertIn('exact value', stdout)

    def test_replay_is_bit_exact(self):
        train_dir = os.path.join(self.out, 'train')
        self.assertEqual(run('train', '--config', self.config, '--out', train_dir)[0], 0)
        manifest_path = os.path.join(train_dir, 'manifest.json')
        with open(manifest_path) as f:
            recorded = json.load(f)['artifacts']
        self.assertIn('summary.csv', recorded)
        self.assertEqual(run('replay', manifest_path)[0], 0)
        for name, digest in recorded.items():
            self.assertEqual(file_sha256(os.path.join(train_dir, name)), digest)

    def test_evolve_then_train_with_discovered_loss(self):
        evolve_dir = os.path.join(self.out, 'evolve')
        self.assertEqual(run('evolve', '--config', self.config, '--out', evolve_dir)[0], 0)
        history = pd.read_csv(os.path.join(evolve_dir, 'history.csv'), comment='#')
        self.assertEqual(history['generation'].tolist(), [0])
        checkpoint = os.path.join(evolve_dir, 'best_zeta.json')
        status, stdout, _ = run('train', '--config', self.config, '--objective', f'gen_orpo:{checkpoint}',
                                '--out', os.path.join(self.out, 'train'))
        self.assertEqual(status, 0)
        self.assertIn('gen_orpo:', stdout)

    def test_landscape(self):
        status, _, _ = run('landscape', '--objective', 'orpo', '--t', '0', '1', '--points', '8', '--out', self.out)
        self.assertEqual(status, 0)
        for name in ('landscape_t0.csv', 'landscape_t1.csv'):
            with open(os.path.join(self.out, name)) as f:
                self.assertTrue(f.readline().startswith('# t='))
            self.assertEqual(len(pd.read_csv(os.path.join(self.out, name), comment='#')), 64)

    def test_errors(self):
        status, _, stderr = run('train', '--config', os.path.join(self.out, 'missing.ini'), '--out', self.out)
        self.assertEqual(status, 2)
        self.assertEqual(len(stderr.strip().splitlines()), 1)
        self.assertEqual(run('train', '--objective', 'ppo', '--config', self.config, '--out', self.out)[0], 2)
        self.assertEqual(run('replay', os.path.join(self.out, 'nothing.json'))[0], 2)

    def test_bad_loss_net_checkpoint(self):
        missing = os.path.join(self.out, 'missing.json')
        malformed = os.path.join(self.out, 'malformed.json')
        with open(malformed, 'w') as f:
            f.write('{"format": "mdpo-lossnet", "params": [1, 2\n')
        for argv, error in ((('verify-theorem', '--potential', f'learned:{missing}'), 'ConfigurationError'),
                            (('verify-theorem', '--potential', f'learned:{malformed}'), 'DatasetFormatError'),
                            (('train', '--config', self.config, '--objective', f'gen_orpo:{malformed}',
                              '--out', self.out), 'DatasetFormatError')):
            status, _, stderr = run(*argv)
            self.assertEqual(status, 2)
            lines = stderr.strip().splitlines()
            self.assertEqual(len(lines), 1)
            self.assertTrue(lines[0].startswith(f'error: {error}: '))
