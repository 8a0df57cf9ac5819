import os
import tempfile
import unittest

import numpy as np

from mdpo.errors import ConfigurationError
from mdpo.lossnet import LossNetParams, init_params, save_params
from mdpo.objectives import ObjectiveKind, ObjectiveSpec, RowLossInput, dpo_loss, generalized_dpo_loss, \
    generalized_orpo_loss, orpo_loss, parse_objective
from mdpo.potentials import OmegaPotential

LN2 = np.log(2.0)


def random_inputs(rng, n, low=0.01, high=0.99):
    return [RowLossInput(*rng.uniform(low, high, 4)) for _ in range(n)]


class TestClosedFormLosses(unittest.TestCase):

    def test_orpo_examples(self):
        self.assertAlmostEqual(orpo_loss(RowLossInput(0.5, 0.5), 0.5), 1.039721, places=6)
        self.assertAlmostEqual(orpo_loss(RowLossInput(1.0 - 1e-12, 0.5), 0.5), 0.0, places=9)
        self.assertAlmostEqual(orpo_loss(RowLossInput(0.3, 0.6), 0.0), -np.log(0.3), places=12)

    def test_dpo_examples(self):
        self.assertAlmostEqual(dpo_loss(RowLossInput(0.2, 0.7, 0.2, 0.7), 0.1), LN2, places=6)
        ratio = RowLossInput(0.95, 0.5, 0.5, 0.5)
        margin = np.log(0.95 / 0.5)
        self.assertAlmostEqual(dpo_loss(ratio, 1.0), np.logaddexp(0.0, -margin), places=12)
        ln19 = RowLossInput(0.019, 0.001, 0.001, 0.001)
        self.assertAlmostEqual(dpo_loss(ln19, 1.0), -np.log(0.95), places=6)
        self.assertAlmostEqual(dpo_loss(ln19, 1.0), 0.051293, places=6)

    def test_dpo_beta_is_linear(self):
        inp = RowLossInput(0.4, 0.3, 0.35, 0.45)
        margin = np.log(0.4 / 0.35) - np.log(0.3 / 0.45)
        for beta in (0.1, 0.2, 0.4):
            self.assertAlmostEqual(dpo_loss(inp, beta), np.logaddexp(0.0, -beta * margin), places=12)

    def test_dpo_needs_reference(self):
        with self.assertRaises(ConfigurationError):
            dpo_loss(RowLossInput(0.4, 0.3), 0.1)
        with self.assertRaises(ConfigurationError):
            generalized_dpo_loss(OmegaPotential('exp'), RowLossInput(0.4, 0.3))

    def test_invalid_inputs(self):
        with self.assertRaises(ConfigurationError):
            RowLossInput(0.0, 0.5)
        with self.assertRaises(ConfigurationError):
            RowLossInput(0.5, 0.5, progress=1.5)
        with self.assertRaises(ConfigurationError):
            ObjectiveSpec.dpo(0.0)
        with self.assertRaises(ConfigurationError):
            ObjectiveSpec.orpo(-1.0)


class TestGeneralizedLosses(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_recovers_orpo(self):
        psi, phi_inverse = OmegaPotential('exp'), OmegaPotential('log_odds')
        for inp in random_inputs(self.rng, 1000):
            self.assertAlmostEqual(generalized_orpo_loss(psi, phi_inverse, inp, 0.5), orpo_loss(inp, 0.5), delta=1e-12)

    def test_recovers_dpo(self):
        phi_inverse = OmegaPotential('exp')
        for inp in random_inputs(self.rng, 1000):
            self.assertAlmostEqual(generalized_dpo_loss(phi_inverse, inp, 0.1), dpo_loss(inp, 0.1), delta=1e-12)

    def test_equal_probabilities(self):
        for name in ('exp', 'log_odds', 'neg_entropy', 'euclidean'):
            loss = generalized_orpo_loss(OmegaPotential('exp'), OmegaPotential(name), RowLossInput(0.3, 0.3), 0.7)
            self.assertAlmostEqual(loss, -np.log(0.3) + 0.7 * LN2, places=12)

    def test_reference_cancellation(self):
        for name in ('exp', 'log_odds', 'euclidean'):
            phi_inverse = OmegaPotential(name)
            self.assertAlmostEqual(generalized_dpo_loss(phi_inverse, RowLossInput(0.3, 0.6, 0.3, 0.6)), LN2, places=12)
        self.assertAlmostEqual(generalized_dpo_loss(OmegaPotential('euclidean'), RowLossInput(0.5, 0.4, 0.3, 0.2)),
                               LN2, places=12)

    def test_residual_only_networks_recover_orpo(self):
        for temporal in (False, True):
            spec = ObjectiveSpec.from_loss_net(LossNetParams.orpo_equivalent(temporal), lam=0.5)
            for inp in random_inputs(self.rng, 200):
                inp = RowLossInput(inp.p_w, inp.p_l, progress=0.6)
                node_loss = float(spec.row_graph(inp.p_w, inp.p_l, progress=inp.progress).value)
                self.assertAlmostEqual(node_loss, orpo_loss(inp, 0.5), delta=1e-10)

    def test_monotone_sensitivity(self):
        zeta = init_params(np.random.default_rng(4))
        specs = [ObjectiveSpec.orpo(0.5), ObjectiveSpec.dpo(0.1),
                 ObjectiveSpec(ObjectiveKind.GEN_ORPO, psi=OmegaPotential('exp'), phi_inverse=OmegaPotential('neg_entropy')),
                 ObjectiveSpec(ObjectiveKind.GEN_DPO, beta=0.5, phi_inverse=OmegaPotential('log_odds')),
                 ObjectiveSpec.from_loss_net(zeta, ObjectiveKind.GEN_ORPO),
                 ObjectiveSpec.from_loss_net(zeta, ObjectiveKind.GEN_DPO)]
        ref = (np.full(100, 0.4), np.full(100, 0.4))
        low = self.rng.uniform(0.02, 0.9, 100)
        high = low + self.rng.uniform(1e-3, 0.08, 100)
        other = self.rng.uniform(0.02, 0.98, 100)
        for spec in specs:
            with self.subTest(objective=spec.kind.value):
                loss_low = spec.row_graph(low, other, *ref).value
                loss_high = spec.row_graph(high, other, *ref).value
                self.assertTrue(np.all(loss_high < loss_low))
                loss_low = spec.row_graph(other, low, *ref).value
                loss_high = spec.row_graph(other, high, *ref).value
                self.assertTrue(np.all(loss_high > loss_low))


class TestLogSpaceGradients(unittest.TestCase):

    def assert_matches_finite_differences(self, spec, horizon=1, progress=0.0):
        rng = np.random.default_rng(7)
        log_pw = rng.uniform(-5.0, -0.1, 50) * horizon
        log_pl = rng.uniform(-5.0, -0.1, 50) * horizon
        ref = (rng.uniform(-5.0, -0.1, 50) * horizon, rng.uniform(-5.0, -0.1, 50) * horizon)
        ref = ref if spec.uses_reference else (None, None)
        _, grad_w, grad_l = spec.losses_and_gradients(log_pw, log_pl, *ref, progress, horizon)
        h = 1e-6

        def loss(w, l):
            return spec.losses_and_gradients(w, l, *ref, progress, horizon)[0]

        numeric_w = (loss(log_pw + h, log_pl) - loss(log_pw - h, log_pl)) / (2 * h)
        numeric_l = (loss(log_pw, log_pl + h) - loss(log_pw, log_pl - h)) / (2 * h)
        np.testing.assert_allclose(grad_w, numeric_w, rtol=1e-4, atol=1e-7)
        np.testing.assert_allclose(grad_l, numeric_l, rtol=1e-4, atol=1e-7)

    def test_orpo(self):
        self.assert_matches_finite_differences(ObjectiveSpec.orpo(0.5))
        self.assert_matches_finite_differences(ObjectiveSpec.orpo(0.5), horizon=20)

    def test_dpo(self):
        self.assert_matches_finite_differences(ObjectiveSpec.dpo(0.1))
        self.assert_matches_finite_differences(ObjectiveSpec.dpo(2.0), horizon=20)

    def test_learned(self):
        zeta = init_params(np.random.default_rng(11), temporal=True)
        for kind in (ObjectiveKind.GEN_ORPO, ObjectiveKind.GEN_DPO):
            self.assert_matches_finite_differences(ObjectiveSpec.from_loss_net(zeta, kind), progress=0.5)

    def test_orpo_gradient_at_half(self):
        _, grad_w, grad_l = ObjectiveSpec.orpo(0.5).losses_and_gradients(np.log([0.5]), np.log([0.5]))
        self.assertAlmostEqual(grad_w[0], -1.5, places=12)
        self.assertAlmostEqual(grad_l[0], 0.5, places=12)


class TestParseObjective(unittest.TestCase):

    def test_closed_form(self):
        self.assertIs(parse_objective('orpo', lam=0.3).kind, ObjectiveKind.ORPO)
        self.assertEqual(parse_objective('orpo', lam=0.3).lam, 0.3)
        self.assertEqual(parse_objective('dpo', beta=0.2).beta, 0.2)
        spec = parse_objective('gen_dpo:log_odds')
        self.assertIs(spec.kind, ObjectiveKind.GEN_DPO)
        self.assertEqual(spec.phi_inverse.name, 'log_odds')
        self.assertEqual(spec.identifier, 'gen_dpo:log_odds')

    def test_checkpoint(self):
        zeta = init_params(np.random.default_rng(2), temporal=True)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'zeta.json')
            save_params(zeta, path)
            spec = parse_objective(f'gen_orpo:{path}', lam=0.5)
            self.assertTrue(spec.temporal)
            self.assertEqual(spec.source, path)
            with self.assertRaises(ConfigurationError):
                parse_objective(f'gen_orpo:{path}', temporal=False)
            inp = RowLossInput(0.4, 0.2)
            self.assertEqual(float(spec.row_graph(inp.p_w, inp.p_l).value),
                             float(ObjectiveSpec.from_loss_net(zeta).row_graph(inp.p_w, inp.p_l).value))

    def test_errors(self):
        for text in ('ppo', 'orpo:extra', 'gen_orpo', 'gen_orpo:/no/such/checkpoint.json'):
            with self.assertRaises(ConfigurationError):
                parse_objective(text)
