##^# library imports ###########################################################
import math
from typing import NamedTuple

import torch
from torch import Tensor

from .errors import NonHermitian, SingularPower, BadExponent
from .utils import CDTYPE, ct, herm, fro, eye

HERM_TOL = 1e-10
RANK_TOL = 1e-12

##$#############################################################################
##^# eigendecomposition ########################################################
class HermitianEig(NamedTuple):
    eigenvalues: Tensor
    eigenvectors: Tensor

    def reconstruct(self):
        U, lam = self.eigenvectors, self.eigenvalues
        return (U * lam[..., None, :].to(U.dtype)) @ ct(U)


def check_hermitian(H: Tensor, tol: float = HERM_TOL):
    err = fro(H - ct(H))
    bound = tol * torch.clamp(fro(H), min=1.0)
    if torch.any(err > bound):
        raise NonHermitian(
            "matrix is not Hermitian", residual=float(torch.max(err / bound) * tol)
        )


def _fix_phases(U):
    # largest-modulus entry of every eigenvector made real positive (first on ties)
    idx = torch.argmax(U.abs(), dim=-2, keepdim=True)
    ph = torch.gather(U, -2, idx)
    return U * (ph.abs() / ph).conj()


def herm_eig(H: Tensor, check: bool = True) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix (or batch).

    Args:
        H: Hermitian matrix of shape (..., N, N)
        check: whether to raise ``NonHermitian`` on asymmetric input
    Returns:
        ``HermitianEig`` with ascending eigenvalues and phase-normalized
        eigenvectors in the columns
    """
    H = H.to(CDTYPE)
    if check:
        check_hermitian(H)
    lam, U = torch.linalg.eigh(herm(H))
    return HermitianEig(lam, _fix_phases(U))


def eig_gap(H: Tensor, rtol: float = RANK_TOL) -> float:
    """Smallest relative gap between eigenvalues of ``H`` that are not equal
    up to ``rtol``; ``inf`` when the spectrum has a single cluster."""
    lam = herm_eig(H, check=False).eigenvalues.reshape(-1, H.shape[-1])
    scale = torch.clamp(lam.abs().max(-1, keepdim=True).values, min=1.0)
    gaps = (lam[..., 1:] - lam[..., :-1]) / scale
    gaps = gaps[gaps > rtol]
    return float(gaps.min()) if gaps.numel() > 0 else math.inf


def eigvalsh(H: Tensor) -> Tensor:
    return torch.linalg.eigvalsh(herm(H.to(CDTYPE)))


def min_eig(H: Tensor) -> Tensor:
    return eigvalsh(H)[..., 0]


def max_eig(H: Tensor) -> Tensor:
    return eigvalsh(H)[..., -1]


##$#############################################################################
##^# matrix functions ##########################################################
def apply_fn(H: Tensor, fn, check: bool = True) -> Tensor:
    """Spectral calculus ``U fn(Λ) U*`` for Hermitian ``H``."""
    lam, U = herm_eig(H, check=check)
    return (U * fn(lam)[..., None, :].to(U.dtype)) @ ct(U)


def mat_power(A: Tensor, s: float, check: bool = True) -> Tensor:
    """Fractional power of a positive semidefinite matrix.

    Args:
        A: PSD matrix (or batch)
        s: real exponent; ``s < 0`` requires a strictly positive ``A``
    Returns:
        ``A^s``; for ``s == 0`` the support projection of ``A``
    """
    lam, U = herm_eig(A, check=check)
    lmax = torch.clamp(lam[..., -1:].abs(), min=1e-300)
    support = lam > RANK_TOL * lmax
    if s < 0 and not bool(torch.all(support)):
        raise SingularPower(
            "negative power of a singular matrix", s=s, min_eig=float(lam.min())
        )
    lam = torch.clamp(lam, min=0.0)
    if s == 0:
        vals = support.to(lam.dtype)
    else:
        vals = torch.where(support, lam, torch.zeros_like(lam)) ** s
    return (U * vals[..., None, :].to(U.dtype)) @ ct(U)


def op_abs(A: Tensor) -> Tensor:
    """``|A| = (A* A)^{1/2}``."""
    A = A.to(CDTYPE)
    return mat_power(herm(ct(A) @ A), 0.5, check=False)


def spectral_projection(H: Tensor, lo: float, hi: float) -> Tensor:
    """Sum of eigenprojections of ``H`` with eigenvalue in ``[lo, hi]``."""
    assert lo <= hi
    lam, U = herm_eig(H)
    sel = ((lam >= lo) & (lam <= hi)).to(U.dtype)
    return (U * sel[..., None, :]) @ ct(U)


##$#############################################################################
##^# norms #####################################################################
def conjugate_exponent(q: float) -> float:
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def check_exponent(p: float, lo: float = 1.0):
    if not (p >= lo):
        raise BadExponent("exponent must be >= %g" % lo, p=p)


def schatten_norm(A: Tensor, p: float) -> Tensor:
    """Schatten ``p``-norm with the unnormalized trace.

    Args:
        A: matrix (or batch)
        p: exponent in ``[1, inf]``
    Returns:
        ``(sum_i s_i^p)^{1/p}`` over the singular values ``s_i``
    """
    check_exponent(p)
    s = torch.linalg.svdvals(A.to(CDTYPE))
    if math.isinf(p):
        return s[..., 0]
    return torch.sum(s ** p, -1) ** (1.0 / p)


def opnorm(A: Tensor) -> Tensor:
    return schatten_norm(A, math.inf)


def psd_part(H: Tensor) -> Tensor:
    """Eigenvalue clipping onto the PSD cone."""
    return apply_fn(H, lambda lam: torch.clamp(lam, min=0.0), check=False)


def is_psd(H: Tensor, tol: float = 1e-9) -> bool:
    scale = torch.clamp(opnorm(H), min=1.0)
    return bool(torch.all(min_eig(H) >= -tol * scale))


def is_projection(P: Tensor, tol: float = 1e-10) -> bool:
    return bool(fro(P - ct(P)) <= tol and fro(P @ P - P) <= tol * max(1.0, float(fro(P))))


##$#############################################################################
