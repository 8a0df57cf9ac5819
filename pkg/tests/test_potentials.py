import unittest

import numpy as np
from scipy.special import rel_entr

from mdpo.errors import DomainError
from mdpo.lossnet import init_params
from mdpo.potentials import OmegaPotential, SimplexPoint, bregman, mirror_map_value, potential_inverse

CLOSED_FORM = ('neg_entropy', 'euclidean', 'log_odds', 'exp')


def random_pairs(rng, n, k=3):
    return rng.dirichlet(np.ones(k), size=n), rng.dirichlet(np.ones(k), size=n)


class TestPotentialInverse(unittest.TestCase):

    def test_examples(self):
        self.assertEqual(potential_inverse(OmegaPotential('neg_entropy'), 1.0), 1.0)
        self.assertEqual(potential_inverse(OmegaPotential('euclidean'), 1.0), 0.5)
        self.assertEqual(potential_inverse(OmegaPotential('log_odds'), 0.5), 0.0)

    def test_domain_errors(self):
        with self.assertRaises(DomainError):
            potential_inverse(OmegaPotential('neg_entropy'), 0.0)
        with self.assertRaises(DomainError):
            potential_inverse(OmegaPotential('neg_entropy'), -1.0)
        with self.assertRaises(DomainError):
            potential_inverse(OmegaPotential('log_odds'), 1.5)
        with self.assertRaises(DomainError):
            potential_inverse(OmegaPotential('log_odds', strict=True), 0.0)

    def test_log_odds_clamps_boundary(self):
        value = potential_inverse(OmegaPotential('log_odds'), 1.0)
        self.assertTrue(np.isfinite(value))
        self.assertGreater(value, 25.0)

    def test_inverse_consistency(self):
        rng = np.random.default_rng(0)
        for name in CLOSED_FORM:
            p = OmegaPotential(name)
            y = rng.uniform(-5.0, 2.0, size=500)
            if name == 'log_odds':
                y = rng.uniform(-10.0, 10.0, size=500)
            recovered = p.inverse(p.forward(y))
            np.testing.assert_allclose(recovered, y, rtol=1e-9, atol=1e-9, err_msg=name)

    def test_forward_inverse_for_closed_forms(self):
        for name, x in (('neg_entropy', 2.5), ('euclidean', -3.0), ('log_odds', 0.3), ('exp', 0.01)):
            p = OmegaPotential(name)
            self.assertAlmostEqual(float(p.forward(p.inverse(x))) / x, 1.0, delta=1e-9)

    def test_strictly_increasing(self):
        rng = np.random.default_rng(1)
        for name in CLOSED_FORM:
            p = OmegaPotential(name)
            a, b = np.sort(rng.uniform(-10.0, 3.0, size=(2, 1000)), axis=0)
            keep = a < b
            self.assertTrue(np.all(p.forward(a[keep]) < p.forward(b[keep])), name)

    def test_lower_limit(self):
        for name in ('neg_entropy', 'log_odds', 'exp'):
            p = OmegaPotential(name)
            self.assertEqual(p.omega, 0.0)
            self.assertLess(abs(float(p.forward(-30.0)) - p.omega), 1e-12)
        self.assertEqual(OmegaPotential('euclidean').omega, -np.inf)
        self.assertLess(float(OmegaPotential('euclidean').forward(-30.0)), -50.0)

    def test_from_name(self):
        self.assertEqual(OmegaPotential.from_name('log_odds').name, 'log_odds')
        with self.assertRaises(DomainError):
            OmegaPotential.from_name('cosine')


class TestMirrorMap(unittest.TestCase):

    def test_examples(self):
        self.assertAlmostEqual(mirror_map_value(OmegaPotential('neg_entropy'), [0.5, 0.5]), -0.693147, places=6)
        self.assertAlmostEqual(mirror_map_value(OmegaPotential('euclidean'), [0.5, 0.5]), 0.5, places=12)

    def test_convex(self):
        rng = np.random.default_rng(2)
        xs, ys = random_pairs(rng, 200)
        for name in CLOSED_FORM:
            p = OmegaPotential(name)
            for x, y in zip(xs, ys):
                mid = mirror_map_value(p, 0.5 * (x + y))
                self.assertLessEqual(mid, 0.5 * (mirror_map_value(p, x) + mirror_map_value(p, y)) + 1e-12)

    def test_learned_matches_trapezoid(self):
        zeta = init_params(np.random.default_rng(3))
        p = OmegaPotential.learned(zeta.psi_network)
        rng = np.random.default_rng(4)
        dist = rng.dirichlet(np.ones(3)) * 0.9 + 0.1 / 3
        expected = 0.0
        for x in dist:
            grid = np.linspace(x, 1.0 - 1e-12, 200001)
            expected -= np.trapz(zeta.psi_network(grid), grid)
        self.assertAlmostEqual(mirror_map_value(p, dist), expected, delta=1e-6)

    def test_invalid_simplex_point(self):
        with self.assertRaises(DomainError):
            SimplexPoint([0.5, 0.6])
        with self.assertRaises(DomainError):
            SimplexPoint([1.2, -0.2])


class TestBregman(unittest.TestCase):

    def test_examples(self):
        self.assertAlmostEqual(bregman(OmegaPotential('neg_entropy'), [0.7, 0.3], [0.5, 0.5]), 0.0822829, places=7)
        self.assertAlmostEqual(bregman(OmegaPotential('euclidean'), [1.0, 0.0], [0.0, 1.0]), 2.0, places=12)
        for name in CLOSED_FORM:
            self.assertAlmostEqual(bregman(OmegaPotential(name), [0.2, 0.8], [0.2, 0.8]), 0.0, places=12)

    def test_zero_entry_rejected(self):
        for name in ('neg_entropy', 'exp', 'log_odds'):
            with self.assertRaises(DomainError):
                bregman(OmegaPotential(name), [0.5, 0.5], [1.0, 0.0])

    def test_euclidean_boundary(self):
        p = OmegaPotential('euclidean')
        self.assertAlmostEqual(bregman(p, [0.5, 0.5], [1.0, 0.0]), 0.5, places=12)
        self.assertAlmostEqual(bregman(p, [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]), 2.0, places=12)
        self.assertEqual(bregman(p, [0.0, 1.0], [0.0, 1.0]), 0.0)

    def test_size_mismatch_rejected(self):
        with self.assertRaises(DomainError):
            bregman(OmegaPotential('euclidean'), [0.5, 0.5], [0.2, 0.3, 0.5])

    def test_non_negative(self):
        rng = np.random.default_rng(5)
        xs, ys = random_pairs(rng, 10000)
        for name in CLOSED_FORM:
            p = OmegaPotential(name)
            values = [bregman(p, x, y) for x, y in zip(xs, ys)]
            self.assertGreaterEqual(min(values), -1e-12, name)

    def test_learned_non_negative(self):
        zeta = init_params(np.random.default_rng(6))
        p = OmegaPotential.learned(zeta.phi_inverse_network)
        xs, ys = random_pairs(np.random.default_rng(7), 10)
        for x, y in zip(xs, ys):
            self.assertGreaterEqual(bregman(p, x, y), -1e-7)

    def test_closed_form_equivalences(self):
        rng = np.random.default_rng(8)
        xs, ys = random_pairs(rng, 1000)
        neg_entropy, euclidean = OmegaPotential('neg_entropy'), OmegaPotential('euclidean')
        for x, y in zip(xs, ys):
            kl = float(np.sum(rel_entr(x, y)))
            self.assertAlmostEqual(bregman(neg_entropy, x, y), kl, delta=1e-9 * abs(kl) + 1e-15)
            generic = mirror_map_value(neg_entropy, x) - mirror_map_value(neg_entropy, y) \
                - float(np.dot(np.log(y) + 1.0, x - y))
            self.assertAlmostEqual(generic, kl, delta=1e-9 * abs(kl) + 1e-12)
            sq = float(np.sum((x - y) ** 2))
            self.assertAlmostEqual(bregman(euclidean, x, y), sq, delta=1e-9 * sq + 1e-15)
