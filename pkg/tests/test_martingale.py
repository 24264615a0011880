################################################################################
import unittest, math

import torch

try:
    import import_header
except ModuleNotFoundError:
    import tests.import_header
################################################################################

torch.set_default_dtype(torch.float64)

from ncbmo_torch.algebra import State
from ncbmo_torch.errors import DimensionMismatch, TooLarge, BadSpec
from ncbmo_torch.martingale import (
    decompose,
    square_functions,
    rademacher_functions,
    rademacher_matrix_martingale,
    random_martingale,
    compressed_dyadic_filtration,
    dyadic_classical_filtration,
    classical_filtration,
)
from ncbmo_torch.norms import bmo, bmo_c, bmo_r
from ncbmo_torch.utils import CDTYPE, ct, fro, eye, make_generator, randn_complex

import objs

gen = make_generator(11)
FIBER = State(torch.tensor([[0.3, 0.1j], [-0.1j, 0.7]], dtype=CDTYPE))


def generate_test(name):
    def fn(self):
        filt = objs.FILTRATIONS[name]
        mart = objs.mart(name, 1, normalize="none")
        self.assertTrue(fro(sum(mart.ds) - mart.x) < 1e-10)
        self.assertTrue(fro(mart.xs[-1] - mart.x) < 1e-10)
        # differences are orthogonal to the past
        for n in range(1, mart.nlevels):
            self.assertTrue(fro(filt.expect(n - 1, mart.ds[n])) < 1e-10)
        sf = square_functions(mart)
        self.assertTrue(fro(sf.col - sum(ct(d) @ d for d in mart.ds)) < 1e-10)
        for ((n, m), s) in sf.conditioned.items():
            self.assertTrue(n <= m)
            self.assertTrue(fro(s - ct(s)) < 1e-12)
            self.assertTrue(filt.level(n).contains(s))

    fn.__name__ = "test_" + name.replace("-", "_")
    return fn


class DecomposeTest(unittest.TestCase):
    def test_shape(self):
        filt = objs.FILTRATIONS["quantum-tensor"]
        with self.assertRaises(DimensionMismatch):
            decompose(eye(3), filt)

    def test_outside_ambient(self):
        filt = objs.two_level_classical()
        with self.assertRaises(DimensionMismatch):
            decompose(torch.tensor([[0.0, 1.0], [0.0, 0.0]], dtype=CDTYPE), filt)

    def test_identity(self):
        mart = objs.identity_mart(objs.FILTRATIONS["block-chain"])
        self.assertTrue(fro(mart.ds[0] - eye(6)) < 1e-10)
        self.assertTrue(max(float(fro(d)) for d in mart.ds[1:]) < 1e-10)
        self.assertTrue(fro(mart.term(-1)) == 0.0)

    def test_adjoint_scaled(self):
        mart = objs.mart("quantum-tensor", 2, normalize="none")
        self.assertTrue(fro(mart.adjoint().x - ct(mart.x)) == 0.0)
        self.assertTrue(abs(bmo_c(mart.adjoint()) - bmo_r(mart)) < 1e-12)
        self.assertTrue(abs(bmo(mart.scaled(-3.0)) - 3.0 * bmo(mart)) < 1e-10)


for name in objs.FILTRATIONS.keys():
    fn = generate_test(name)
    setattr(DecomposeTest, fn.__name__, fn)


class DyadicTest(unittest.TestCase):
    def test_matches_dense(self):
        comp = compressed_dyadic_filtration(2, 2, FIBER)
        dense = comp.dense()
        y = randn_complex(comp.element_shape, gen)
        Y = comp.to_dense(y)
        for n in range(comp.nlevels):
            self.assertTrue(fro(comp.to_dense(comp.expect(n, y)) - dense.expect(n, Y)) < 1e-10)
        self.assertTrue(abs(complex(comp.phi(y) - dense.phi(Y))) < 1e-12)
        self.assertTrue(abs(float(comp.opnorm(y)) - float(dense.opnorm(Y))) < 1e-10)
        for p in [1.0, 3.0, math.inf]:
            for eta in [0.0, 0.5, 1.0]:
                a, b = float(comp.lp_norm(y, p, eta)), float(dense.lp_norm(Y, p, eta))
                self.assertTrue(abs(a - b) < 1e-10 * max(1.0, b))

    def test_martingale_norms_match_dense(self):
        comp = compressed_dyadic_filtration(2, 2, FIBER)
        mart = random_martingale(comp, 4, normalize="none")
        dm = mart.dense()
        self.assertTrue(abs(bmo_c(mart) - bmo_c(dm)) < 1e-10)
        self.assertTrue(abs(bmo_r(mart) - bmo_r(dm)) < 1e-10)

    def test_too_large(self):
        with self.assertRaises(TooLarge):
            dyadic_classical_filtration(4, 8)
        with self.assertRaises(TooLarge):
            compressed_dyadic_filtration(10, 8)
        comp = compressed_dyadic_filtration(5, 4)
        with self.assertRaises(TooLarge):
            comp.to_dense(comp.identity())

    def test_commutative(self):
        self.assertTrue(compressed_dyadic_filtration(3).is_commutative())
        self.assertTrue(dyadic_classical_filtration(2).is_commutative())
        self.assertFalse(dyadic_classical_filtration(1, 2).is_commutative())


class RademacherTest(unittest.TestCase):
    def test_functions(self):
        r = rademacher_functions(4)
        self.assertEqual(tuple(r.shape), (4, 16))
        self.assertTrue(bool(torch.all(r.abs() == 1.0)))
        self.assertTrue(torch.norm(r @ r.T - 16.0 * torch.eye(4)) < 1e-12)

    def test_bmo_values(self):
        for n in [1, 2, 4, 8]:
            filt, mart = rademacher_matrix_martingale(n)
            self.assertTrue(abs(bmo_c(mart) - 1.0) < 1e-10)
            self.assertTrue(abs(bmo_r(mart) - math.sqrt(n)) < 1e-10)

    def test_exact_matches_compressed(self):
        filt, mart = rademacher_matrix_martingale(3)
        dense, dm = rademacher_matrix_martingale(3, exact=True)
        self.assertEqual(dense.dim, 24)
        self.assertTrue(abs(bmo_c(mart) - bmo_c(dm)) < 1e-10)
        self.assertTrue(abs(float(filt.lp_norm(mart.x, 4.0)) - float(dense.lp_norm(dm.x, 4.0))) < 1e-10)

    def test_bad_size(self):
        with self.assertRaises(BadSpec):
            rademacher_matrix_martingale(0)


class ConstructorTest(unittest.TestCase):
    def test_random_normalized(self):
        for name in objs.FILTRATIONS.keys():
            mart = objs.mart(name, 5)
            self.assertTrue(abs(bmo(mart) - 1.0) < 1e-10, name)
        filt = objs.FILTRATIONS["quantum-tensor"]
        mart = random_martingale(filt, 6, normalize="lp", p=3.0)
        self.assertTrue(abs(float(filt.lp_norm(mart.x, 3.0)) - 1.0) < 1e-10)

    def test_reproducible(self):
        a = objs.mart("block-chain", 9)
        b = objs.mart("block-chain", 9)
        self.assertTrue(fro(a.x - b.x) == 0.0)

    def test_classical_partition(self):
        with self.assertRaises(BadSpec):
            classical_filtration([1.0, 1.0, 1.0], [[3], [1, 1]])
        filt = classical_filtration([1.0, 2.0, 3.0, 4.0], [[4], [2, 2], [1, 1, 1, 1]])
        self.assertEqual(filt.nlevels, 3)
        self.assertTrue(filt.is_commutative())


if __name__ == "__main__":
    unittest.main(verbosity=2)
