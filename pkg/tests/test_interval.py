################################################################################
import unittest, os, tempfile
from fractions import Fraction

import torch

try:
    import import_header
except ModuleNotFoundError:
    import tests.import_header
################################################################################

torch.set_default_dtype(torch.float64)

from ncbmo_torch.errors import NotNested, ParseError, IoError
from ncbmo_torch.interval import (
    Interval,
    covering_dyadic,
    StepFunction,
    grid_intervals,
    interval_bmo_c,
    interval_bmo_c_sqrt,
    interval_bmo,
    interval_bmo_sqrt,
    extended_bmo_p,
    interval_bmo_p_lower,
    interval_comparison_check,
    read_step_function,
    write_step_function,
)
from ncbmo_torch.norms import bmo_c_centered
from ncbmo_torch.utils import fro, make_generator, randn_complex
from ncbmo_torch.verify import check_covering, random_nested_pairs

gen = make_generator(23)


def random_step(depth, k):
    return StepFunction(randn_complex((2 ** depth, k, k), gen))


class CoveringTest(unittest.TestCase):
    def test_dyadic_is_its_own_cover(self):
        I = Interval(Fraction(1, 4), Fraction(1, 4))
        self.assertEqual(covering_dyadic(I), I)

    def test_shifted_grid(self):
        I = Interval.from_endpoints(Fraction(9, 20), Fraction(11, 20))
        J = covering_dyadic(I)
        self.assertEqual(J, Interval(Fraction(1, 3), Fraction(1, 4)))
        self.assertTrue(J.contains(I) and J.length <= 6 * I.length)

    def test_random(self):
        rep = check_covering(2000, seed=3)
        self.assertTrue(rep.passed)
        self.assertTrue(rep.records[0]["max_inflation"] <= 6.0)

    def test_bad_length(self):
        with self.assertRaises(ValueError):
            Interval(Fraction(0), Fraction(0))


class StepFunctionTest(unittest.TestCase):
    def test_grid(self):
        a, b = grid_intervals(3)
        self.assertEqual(len(a), 8 * 9 // 2)
        a, b = grid_intervals(3, dyadic_only=True)
        self.assertEqual(len(a), 15)

    def test_cells(self):
        f = random_step(3, 1)
        I = f.interval(2, 5)
        self.assertEqual(f.cells(I), (2, 5))
        with self.assertRaises(ValueError):
            f.cells(Interval(Fraction(1, 3), Fraction(1, 8)))

    def test_to_martingale(self):
        f = random_step(3, 2)
        mart = f.to_martingale()
        self.assertTrue(float(fro(mart.x - f.values).max()) < 1e-14)
        self.assertTrue(float(fro(sum(mart.ds) - f.values).max()) < 1e-12)

    def test_bridge_identity(self):
        # dyadic intervals are the atoms of the dyadic filtration
        for k in [1, 2, 3]:
            f = random_step(4, k)
            lhs = interval_bmo_c(f, dyadic_only=True)
            rhs = bmo_c_centered(f.to_martingale()) ** 2
            self.assertTrue(abs(lhs - rhs) <= 1e-8 * max(1.0, rhs))

    def test_reflection(self):
        f = random_step(3, 2)
        self.assertTrue(abs(interval_bmo_c(f) - interval_bmo_c(f.reflect())) < 1e-10)
        self.assertTrue(interval_bmo_c(f, dyadic_only=True) <= interval_bmo_c(f) + 1e-12)
        self.assertTrue(interval_bmo(f) >= interval_bmo_c(f))
        self.assertTrue(abs(interval_bmo_c_sqrt(f) ** 2 - interval_bmo_c(f)) < 1e-12 * max(1.0, interval_bmo_c(f)))
        self.assertTrue(interval_bmo_sqrt(f) >= interval_bmo_c_sqrt(f))

    def test_constant(self):
        f = StepFunction(torch.ones((4, 2, 2), dtype=torch.complex128))
        self.assertTrue(interval_bmo_c(f) < 1e-14)
        self.assertTrue(extended_bmo_p(f) < 1e-14)


class IntervalNormTest(unittest.TestCase):
    def test_p2_closed_form(self):
        for k in [1, 2]:
            f = random_step(3, k)
            rep = interval_bmo_p_lower(f, 2.0)
            self.assertTrue(abs(rep.value - interval_bmo_c(f) ** 0.5) < 1e-10)

    def test_extended_dominates(self):
        f = random_step(2, 2)
        rep = interval_bmo_p_lower(f, 4.0, restarts=2, max_it=30)
        self.assertTrue(rep.value <= extended_bmo_p(f) * (1 + 1e-9))
        self.assertTrue(isinstance(rep.witness["interval"], Interval))


class ComparisonTest(unittest.TestCase):
    def test_witness_pass(self):
        f = random_step(3, 2)
        pairs = random_nested_pairs(3, 20, seed=1)
        records = interval_comparison_check(f, 4.0, pairs, restarts=1, max_it=30)
        self.assertEqual(len(records), 20)
        self.assertTrue(all(r.witness_pass for r in records))
        self.assertTrue(all(r.factor >= 2.0 for r in records))

    def test_not_nested(self):
        f = random_step(2, 1)
        pairs = [(f.interval(0, 2), f.interval(1, 3))]
        with self.assertRaises(NotNested):
            interval_comparison_check(f, 4.0, pairs)


class CodecTest(unittest.TestCase):
    def test_write_read(self):
        f = random_step(2, 2)
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "f.txt")
            write_step_function(f, path)
            g = read_step_function(path)
        self.assertEqual(g.depth, 2)
        self.assertTrue(float(fro(g.values - f.values).max()) == 0.0)

    def test_parse_errors(self):
        cases = [
            "depth 1 fiber\n1\n2\n",
            "depth 1 fiber 1\n1\n",
            "depth 1 fiber 1\n1\nx\n",
            "depth 1 fiber 2\n1 2\n3\n",
            "# nothing\n",
        ]
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "f.txt")
            for text in cases:
                with open(path, "w") as fp:
                    fp.write(text)
                with self.assertRaises(ParseError):
                    read_step_function(path)

    def test_line_number(self):
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "f.txt")
            with open(path, "w") as fp:
                fp.write("depth 1 fiber 1\n# comment\n1\n1+q\n")
            with self.assertRaises(ParseError) as cm:
                read_step_function(path)
        self.assertEqual(cm.exception.line, 4)

    def test_missing(self):
        with self.assertRaises(IoError):
            read_step_function("/nonexistent/ncbmo/f.txt")


if __name__ == "__main__":
    unittest.main(verbosity=2)
