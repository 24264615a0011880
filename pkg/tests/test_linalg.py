################################################################################
import unittest, math

import torch, numpy as np

try:
    import import_header
except ModuleNotFoundError:
    import tests.import_header
################################################################################

torch.set_default_dtype(torch.float64)

from ncbmo_torch import linalg
from ncbmo_torch.errors import NonHermitian, SingularPower, BadExponent
from ncbmo_torch.utils import CDTYPE, ct, fro, eye, make_generator, randn_complex, random_psd

gen = make_generator(0)
A = random_psd(5, gen) + 0.1 * eye(5)
B = randn_complex((3, 4, 4), gen)


class EigTest(unittest.TestCase):
    def test_reconstruct(self):
        err = fro(linalg.herm_eig(A).reconstruct() - A)
        self.assertTrue(err < 1e-10)

    def test_deterministic_phases(self):
        U1 = linalg.herm_eig(A).eigenvectors
        U2 = linalg.herm_eig(A.clone()).eigenvectors
        self.assertTrue(fro(U1 - U2) == 0.0)
        idx = torch.argmax(U1.abs(), 0)
        lead = U1[idx, torch.arange(5)]
        self.assertTrue(float(lead.imag.abs().max()) < 1e-14)
        self.assertTrue(float(lead.real.min()) > 0.0)

    def test_non_hermitian(self):
        with self.assertRaises(NonHermitian) as cm:
            linalg.herm_eig(B[0])
        self.assertEqual(cm.exception.code, "linalg.NonHermitian")

    def test_batched(self):
        H = B + ct(B)
        lam, U = linalg.herm_eig(H)
        self.assertEqual(tuple(lam.shape), (3, 4))
        self.assertTrue(float(fro(linalg.HermitianEig(lam, U).reconstruct() - H).max()) < 1e-10)

    def test_eig_gap(self):
        H = torch.diag(torch.tensor([1.0, 1.0 + 1e-9, 3.0], dtype=CDTYPE))
        self.assertTrue(abs(linalg.eig_gap(H) - 1e-9 / 3.0) < 1e-15)
        H = torch.diag(torch.tensor([1.0, 1.0, 3.0], dtype=CDTYPE))
        self.assertTrue(abs(linalg.eig_gap(H) - 2.0 / 3.0) < 1e-12)
        self.assertEqual(linalg.eig_gap(eye(3)), math.inf)


class PowerTest(unittest.TestCase):
    def test_square_root(self):
        R = linalg.mat_power(A, 0.5)
        self.assertTrue(fro(R @ R - A) < 1e-10)

    def test_inverse(self):
        self.assertTrue(fro(linalg.mat_power(A, -1.0) @ A - eye(5)) < 1e-9)

    def test_singular_negative(self):
        P = torch.diag(torch.tensor([1.0, 0.0], dtype=CDTYPE))
        with self.assertRaises(SingularPower):
            linalg.mat_power(P, -0.5)

    def test_support_projection(self):
        v = torch.tensor([[1.0], [1.0j], [0.0]], dtype=CDTYPE)
        P = linalg.mat_power(v @ ct(v), 0.0)
        self.assertTrue(fro(P - v @ ct(v) / 2.0) < 1e-12)

    def test_op_abs(self):
        X = B[0]
        Y = linalg.op_abs(X)
        self.assertTrue(fro(Y @ Y - ct(X) @ X) < 1e-10)
        self.assertTrue(linalg.is_psd(Y))

    def test_spectral_projection(self):
        P = linalg.spectral_projection(A, -math.inf, float(linalg.eigvalsh(A)[2]))
        self.assertTrue(linalg.is_projection(P))
        self.assertTrue(abs(float(torch.trace(P).real) - 3.0) < 1e-10)

    def test_power_round_trip(self):
        for X in [A, random_psd(4, gen), random_psd(4, gen) + eye(4)]:
            for s in [0.5, 1.0 / 3.0, 2.0]:
                Y = linalg.mat_power(linalg.mat_power(X, s), 1.0 / s)
                self.assertTrue(fro(Y - X) < 1e-9 * max(1.0, float(fro(X))), s)


class NormTest(unittest.TestCase):
    def test_schatten_vs_numpy(self):
        s = np.linalg.svd(B[1].numpy(), compute_uv=False)
        for p in [1.0, 1.5, 2.0, 3.0, 7.0]:
            ref = np.sum(s ** p) ** (1.0 / p)
            self.assertTrue(abs(float(linalg.schatten_norm(B[1], p)) - ref) < 1e-10 * ref)
        self.assertTrue(abs(float(linalg.opnorm(B[1])) - s[0]) < 1e-12)

    def test_hilbert_schmidt(self):
        self.assertTrue(abs(float(linalg.schatten_norm(B[2], 2.0)) - float(fro(B[2]))) < 1e-12)

    def test_conjugate_exponent(self):
        self.assertEqual(linalg.conjugate_exponent(1.0), math.inf)
        self.assertEqual(linalg.conjugate_exponent(math.inf), 1.0)
        self.assertTrue(abs(linalg.conjugate_exponent(3.0) - 1.5) < 1e-15)

    def test_bad_exponent(self):
        with self.assertRaises(BadExponent):
            linalg.schatten_norm(A, 0.5)

    def test_psd_part(self):
        H = B[0] + ct(B[0])
        self.assertTrue(linalg.is_psd(linalg.psd_part(H)))

    def test_holder(self):
        X, Y = B[0], B[1]
        for (p, q) in [(2.0, 2.0), (3.0, 6.0), (4.0, 4.0), (1.5, 3.0), (math.inf, 2.0)]:
            r = 1.0 / (1.0 / p + 1.0 / q)
            lhs = float(linalg.schatten_norm(X @ Y, r))
            rhs = float(linalg.schatten_norm(X, p) * linalg.schatten_norm(Y, q))
            self.assertTrue(lhs <= rhs * (1 + 1e-12), (p, q))

    def test_nonincreasing_in_p(self):
        ps = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0, 20.0, math.inf]
        for X in [B[2], A]:
            vals = [float(linalg.schatten_norm(X, p)) for p in ps]
            self.assertTrue(all(b <= a * (1 + 1e-12) for (a, b) in zip(vals[:-1], vals[1:])))


if __name__ == "__main__":
    unittest.main(verbosity=2)
