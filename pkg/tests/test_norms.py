################################################################################
import unittest, math

import torch

try:
    import import_header
except ModuleNotFoundError:
    import tests.import_header
################################################################################

torch.set_default_dtype(torch.float64)

from ncbmo_torch import linalg
from ncbmo_torch.errors import NotPSD, NotCommutative, LengthMismatch, BadExponent
from ncbmo_torch.martingale import square_functions
from ncbmo_torch.norms import (
    bmo,
    bmo_c,
    bmo_c_centered,
    conditioned_linf_c,
    conditioned_moment,
    hp_c,
    hp_r,
    hp,
    stein_projection,
    lp_l2c_norm,
    lp_l2r_norm,
    SupNormProblem,
    sup_norm_bracket,
    lp_c_mo,
    bmo_p_ratio,
    bmo_p_c,
    bmo_p,
    classical_bmo_p_oracle,
    classical_bmo_exponential,
)
from ncbmo_torch.utils import CDTYPE, ct, fro, eye, make_generator, randn_complex, random_psd

import objs

gen = make_generator(17)


class BmoTest(unittest.TestCase):
    def test_identity(self):
        for filt in objs.FILTRATIONS.values():
            mart = objs.identity_mart(filt)
            self.assertTrue(abs(bmo(mart) - 1.0) < 1e-10)
            self.assertTrue(bmo_c_centered(mart) < 1e-7)

    def test_centered_below(self):
        for name in objs.FILTRATIONS.keys():
            mart = objs.mart(name, 3)
            self.assertTrue(bmo_c_centered(mart) <= bmo_c(mart) + 1e-12)

    def test_conditioned_quantities(self):
        mart = objs.mart("quantum-tensor", 4)
        filt, M = mart.filtration, mart.nlevels - 1
        sf = square_functions(mart)
        ref = max(float(linalg.opnorm(sf.conditioned[(n, M)])) for n in range(M + 1)) ** 0.5
        self.assertTrue(abs(conditioned_moment(mart, 2.0) - ref) < 1e-10)
        self.assertTrue(conditioned_moment(mart, 2.0) <= bmo_c(mart) + 1e-12)
        E0 = filt.expect(0, ct(mart.x) @ mart.x)
        self.assertTrue(abs(conditioned_linf_c(mart, 0) - float(linalg.opnorm(E0)) ** 0.5) < 1e-12)


class HardyTest(unittest.TestCase):
    def test_p2_pythagoras(self):
        # the symmetric L_2 embedding makes the differences orthogonal
        for name in objs.FILTRATIONS.keys():
            mart = objs.mart(name, 5)
            lp = float(mart.filtration.lp_norm(mart.x, 2.0, 0.5))
            self.assertTrue(abs(hp_c(mart, 2.0) - lp) < 1e-10 * max(1.0, lp), name)
            self.assertTrue(abs(hp_r(mart, 2.0) - lp) < 1e-10 * max(1.0, lp), name)

    def test_hp_max(self):
        mart = objs.mart("block-chain", 6)
        self.assertEqual(hp(mart, 3.0), max(hp_c(mart, 3.0), hp_r(mart, 3.0)))


class SteinTest(unittest.TestCase):
    def test_length(self):
        filt = objs.FILTRATIONS["quantum-tensor"]
        with self.assertRaises(LengthMismatch):
            stein_projection([eye(4)], filt)

    def test_adapted_fixed_point(self):
        filt = objs.FILTRATIONS["block-chain"]
        zs = [filt.level(n).project(randn_complex((6, 6), gen)) for n in range(filt.nlevels)]
        Q = stein_projection(zs, filt)
        self.assertTrue(max(float(fro(a - b)) for (a, b) in zip(Q, zs)) < 1e-10)

    def test_p2_contraction(self):
        filt = objs.FILTRATIONS["quantum-tensor"]
        for _ in range(10):
            zs = [filt.embed(randn_complex((4, 4), gen), 2.0) for _ in range(filt.nlevels)]
            Q = stein_projection(zs, filt, 2.0)
            self.assertTrue(lp_l2c_norm(Q, 2.0) <= lp_l2c_norm(zs, 2.0) * (1 + 1e-9))
            self.assertTrue(lp_l2r_norm(Q, 2.0) <= lp_l2r_norm(zs, 2.0) * (1 + 1e-9))

    def test_single_term(self):
        z = randn_complex((3, 3), gen)
        self.assertTrue(abs(lp_l2c_norm([z], 3.0) - float(linalg.schatten_norm(z, 3.0))) < 1e-10)


class SupNormTest(unittest.TestCase):
    def test_not_psd(self):
        with self.assertRaises(NotPSD):
            sup_norm_bracket(SupNormProblem([eye(2), -eye(2)], 2.0))

    def test_infinity(self):
        X = [random_psd(3, gen) for _ in range(3)]
        br = sup_norm_bracket(SupNormProblem(X, math.inf))
        ref = max(float(linalg.opnorm(x)) for x in X)
        self.assertTrue(abs(br.lower - ref) < 1e-12 and br.lower == br.upper)

    def test_single(self):
        x = random_psd(3, gen)
        br = sup_norm_bracket(SupNormProblem([x], 2.5))
        self.assertTrue(abs(br.lower - float(linalg.schatten_norm(x, 2.5))) < 1e-10)

    def test_diagonal_exact(self):
        X = [torch.diag_embed(torch.rand(5, generator=gen, dtype=torch.float64).to(CDTYPE)) for _ in range(4)]
        for q in [1.0, 1.5, 3.0]:
            br = sup_norm_bracket(SupNormProblem(X, q, restarts=1, max_it=20))
            self.assertTrue(br.upper - br.lower <= 1e-10 * br.upper)

    def test_repeated_term(self):
        x = random_psd(3, gen)
        br = sup_norm_bracket(SupNormProblem([x, x], 2.0, restarts=1, max_it=50))
        ref = float(linalg.schatten_norm(x, 2.0))
        self.assertTrue(abs(br.lower - ref) < 1e-8 * ref)
        self.assertTrue(br.lower <= br.upper * (1 + 1e-12))

    def test_bracket_order(self):
        for q in [1.5, 2.0, 4.0]:
            X = [random_psd(3, gen) for _ in range(3)]
            br = sup_norm_bracket(SupNormProblem(X, q, restarts=2, max_it=100))
            self.assertTrue(0.0 <= br.lower <= br.upper * (1 + 1e-9))
            self.assertTrue(br.upper <= float(linalg.schatten_norm(sum(X), q)) * (1 + 1e-12))


class LpCMOTest(unittest.TestCase):
    def test_infinity_is_bmo_c(self):
        for name in objs.FILTRATIONS.keys():
            mart = objs.mart(name, 7)
            self.assertTrue(abs(lp_c_mo(mart, math.inf).value - bmo_c(mart)) < 1e-10)

    def test_bracket(self):
        mart = objs.mart("quantum-tensor", 8)
        rep = lp_c_mo(mart, 6.0, restarts=2, max_it=50)
        self.assertTrue(0.0 < rep.value <= rep.upper_bound * (1 + 1e-9))

    def test_exponent(self):
        with self.assertRaises(BadExponent):
            lp_c_mo(objs.mart("quantum-tensor", 8), 1.5)


class BmoPTest(unittest.TestCase):
    def test_p2_equals_bmo_c(self):
        for name in ["quantum-tensor", "block-chain"]:
            mart = objs.mart(name, 9)
            rep = bmo_p_c(mart, 2.0, restarts=2, max_it=30)
            self.assertTrue(abs(rep.value - bmo_c(mart)) < 1e-8, name)

    def test_left_inequality_seeded(self):
        mart = objs.mart("quantum-tensor", 10)
        rep = bmo_p(mart, 4.0, restarts=2, max_it=50)
        self.assertTrue(rep.details["seeded_value"] >= bmo(mart) - 1e-6)
        self.assertTrue(rep.value >= rep.details["seeded_value"] - 1e-10)
        self.assertTrue(rep.value <= rep.upper_bound)

    def test_witness_recomputes(self):
        mart = objs.mart("block-chain", 11)
        rep = bmo_p_c(mart, 3.0, restarts=2, max_it=50)
        w = rep.witness
        self.assertTrue(abs(bmo_p_ratio(mart, w["n"], w["m"], w["a"], 3.0) - rep.value) < 1e-6)

    def test_positive_mode(self):
        mart = objs.mart("quantum-tensor", 12)
        rep = bmo_p_c(mart, 4.0, restarts=2, max_it=50, positive=True)
        self.assertTrue(linalg.is_psd(rep.witness["a"]))
        self.assertTrue(rep.value <= bmo_p_c(mart, math.inf).value + 1e-10)

    def test_warm_start(self):
        mart = objs.mart("quantum-tensor", 13)
        first = bmo_p_c(mart, 4.0, restarts=4, max_it=50)
        second = bmo_p_c(mart, 4.0, restarts=4, max_it=50, warm_start=first)
        self.assertTrue(second.value >= first.value - 1e-9)

    def test_monotone_in_p(self):
        for name in ["quantum-tensor", "block-chain"]:
            mart = objs.mart(name, 14)
            prev, vals = None, []
            for p in [2.0, 3.0, 4.0, 6.0, 8.0]:
                prev = bmo_p(mart, p, restarts=4 if prev is None else 2, max_it=200, warm_start=prev)
                vals.append(prev.value)
            for (a, b) in zip(vals[:-1], vals[1:]):
                self.assertTrue(b >= a - 1e-5 * max(1.0, a), (name, vals))

    def test_pruned_pairs_keep_seeded_value(self):
        mart = objs.mart("block-chain", 15)
        full = bmo_p_c(mart, 4.0, restarts=2, max_it=50)
        pruned = bmo_p_c(mart, 4.0, restarts=2, max_it=50, prune=0.9)
        self.assertTrue(abs(pruned.details["seeded_value"] - full.details["seeded_value"]) < 1e-12)
        self.assertTrue(pruned.iterations <= full.iterations)
        w = pruned.witness
        self.assertTrue(abs(bmo_p_ratio(mart, w["n"], w["m"], w["a"], 4.0) - pruned.value) < 1e-8)

    def test_classical_oracle(self):
        for seed in range(3):
            mart = objs.mart("classical-weighted", seed)
            for p in [2.0, 4.0, 8.0]:
                exact = classical_bmo_p_oracle(mart, p)
                val = bmo_p_c(mart, p, restarts=4, max_it=50).value
                self.assertTrue(abs(val - exact) <= 1e-5 * exact)

    def test_oracle_needs_commutative(self):
        with self.assertRaises(NotCommutative):
            classical_bmo_p_oracle(objs.mart("quantum-tensor", 1), 3.0)

    def test_exponential(self):
        mart = objs.mart("classical-dyadic", 2)
        a = classical_bmo_exponential(mart, 0.5)
        b = classical_bmo_exponential(mart, 2.0)
        self.assertTrue(a >= b >= 1.0)


if __name__ == "__main__":
    unittest.main(verbosity=2)
