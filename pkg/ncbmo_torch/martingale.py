##^# library imports ###########################################################
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Dict, Tuple

import torch
from torch import Tensor

from . import linalg
from .algebra import (
    State,
    Subalgebra,
    Filtration,
    block_subalgebra,
    full_algebra,
    validate_filtration,
)
from .errors import DimensionMismatch, TooLarge, BadSpec
from .utils import CDTYPE, ctensor, ct, herm, trace, eye
from .utils import make_generator, randn_complex

MAX_DENSE_DIM = 64
MAX_COMPRESSED_SIZE = 4096

##$#############################################################################
##^# compressed dyadic filtration ##############################################
class DyadicFiltration:
    """Dyadic filtration on ``L_inf([0,1]) (x) M_k`` stored cell by cell.

    Elements are tensors of shape ``(2^m, k, k)``, one fiber matrix per dyadic
    cell of length ``2^{-m}``. Level ``j`` consists of the elements constant on
    dyadic intervals of length ``2^{-j}``. The state is Lebesgue measure tensor
    the fiber state. The interface matches ``Filtration``.
    """

    def __init__(self, depth: int, fiber_state: State):
        self.depth, self.fiber_state = depth, fiber_state
        self._dense = None

    @property
    def ncells(self):
        return 2 ** self.depth

    @property
    def fiber_dim(self):
        return self.fiber_state.dim

    @property
    def nlevels(self):
        return self.depth + 1

    @property
    def dim(self):
        return self.ncells * self.fiber_dim

    @property
    def element_shape(self):
        return (self.ncells, self.fiber_dim, self.fiber_dim)

    def identity(self):
        return eye(self.fiber_dim).expand(self.element_shape).clone()

    def expect(self, n: int, y: Tensor) -> Tensor:
        y = y.to(CDTYPE)
        if n < 0:
            return torch.zeros_like(y)
        groups = 2 ** n
        k = self.fiber_dim
        z = y.reshape(y.shape[:-3] + (groups, self.ncells // groups, k, k))
        z = z.mean(-3, keepdim=True).expand(z.shape)
        return z.reshape(y.shape)

    def expect_lp(self, n: int, z: Tensor, p: float) -> Tensor:
        # D^{1/p} = (uniform)^{1/p} (x) D_f^{1/p} commutes with cell averaging
        return self.expect(n, z)

    def phi(self, y: Tensor) -> Tensor:
        return trace(self.fiber_state.density @ y.to(CDTYPE)).sum(-1) / self.ncells

    def embed(self, y: Tensor, p: float, eta: float = 0.5) -> Tensor:
        if math.isinf(p):
            return y.to(CDTYPE)
        fs = self.fiber_state
        w = self.ncells ** (-1.0 / p)
        return w * (fs.power((1.0 - eta) / p) @ y.to(CDTYPE) @ fs.power(eta / p))

    def schatten(self, z: Tensor, p: float) -> Tensor:
        norms = linalg.schatten_norm(z, p)
        if math.isinf(p):
            return norms.max(-1).values
        return torch.sum(norms ** p, -1) ** (1.0 / p)

    def lp_norm(self, y: Tensor, p: float, eta: float = 0.5) -> Tensor:
        return self.schatten(self.embed(y, p, eta), p)

    def opnorm(self, y: Tensor) -> Tensor:
        return linalg.opnorm(y).max(-1).values

    def is_commutative(self, tol: float = 1e-10):
        return self.fiber_dim == 1

    def dense(self) -> Filtration:
        if self._dense is None:
            self._dense = dyadic_classical_filtration(self.depth, self.fiber_dim, self.fiber_state)
        return self._dense

    def to_dense(self, y: Tensor) -> Tensor:
        if self.dim > MAX_DENSE_DIM:
            raise TooLarge("dense form exceeds the desk-scale dimension", dim=self.dim)
        return torch.block_diag(*y.to(CDTYPE))


##$#############################################################################
##^# filtration builders #######################################################
def _dyadic_level(m: int, j: int, k: int) -> Subalgebra:
    # level j: dyadic step functions at scale 2^{-j} (x) M_k, cell-major layout
    ncells, width = 2 ** m, 2 ** (m - j)
    basis, central = [], []
    for g in range(2 ** j):
        P = torch.zeros(ncells, dtype=CDTYPE)
        P[g * width : (g + 1) * width] = 1.0
        P = torch.diag(P)
        central.append(torch.kron(P, eye(k)))
        for a in range(k):
            for b in range(k):
                E = torch.zeros((k, k), dtype=CDTYPE)
                E[a, b] = 1.0
                basis.append(torch.kron(P, E) / math.sqrt(width))
    return Subalgebra(torch.stack(basis), central_projections=central)


def dyadic_classical_filtration(depth: int, fiber_dim: int = 1, density=None) -> Filtration:
    """Dense dyadic filtration on ``L_inf([0,1]) (x) M_k`` truncated at depth ``m``.

    Args:
        depth: ``m``, number of dyadic refinements
        fiber_dim: ``k``
        density: ``State`` on ``M_k`` (default normalized trace)
    Returns:
        validated ``Filtration`` of ambient dimension ``2^m k`` with ``m + 1`` levels
    """
    if 2 ** depth * fiber_dim > MAX_DENSE_DIM:
        raise TooLarge("ambient dimension exceeds %d" % MAX_DENSE_DIM, depth=depth, fiber_dim=fiber_dim)
    fs = State.tracial(fiber_dim) if density is None else density
    if fs.dim != fiber_dim:
        raise DimensionMismatch("fiber density has the wrong size", fiber_dim=fiber_dim)
    state = State(torch.kron(eye(2 ** depth) / 2 ** depth, fs.density))
    levels = [_dyadic_level(depth, j, fiber_dim) for j in range(depth + 1)]
    return validate_filtration(state, levels)


def compressed_dyadic_filtration(depth: int, fiber_dim: int = 1, density=None) -> DyadicFiltration:
    if 2 ** depth * fiber_dim > MAX_COMPRESSED_SIZE:
        raise TooLarge("compressed size exceeds %d" % MAX_COMPRESSED_SIZE, depth=depth, fiber_dim=fiber_dim)
    fs = State.tracial(fiber_dim) if density is None else density
    return DyadicFiltration(depth, fs)


def classical_filtration(weights, partitions) -> Filtration:
    """Commutative filtration on ``N`` atoms with diagonal density ``weights``.

    Args:
        weights: positive atom weights (normalized to sum 1)
        partitions: per level, the sizes of consecutive atom groups; the last
            level must separate all atoms
    """
    N = len(weights)
    levels = []
    for sizes in partitions:
        if sum(sizes) != N:
            raise BadSpec("partition does not cover all atoms", sizes=list(sizes), N=N)
        levels.append(block_subalgebra([(1, s) for s in sizes], N))
    return validate_filtration(State.from_weights(weights), levels)


def quantum_tensor_filtration(d1, d2) -> Filtration:
    """Chain ``diag (x) 1 < M_2 (x) 1 < M_2 (x) M_2`` with density ``D_1 (x) D_2``.

    Args:
        d1: diagonal weights of ``D_1`` (length 2)
        d2: ``2 x 2`` positive matrix ``D_2``
    """
    D1 = torch.diag(torch.as_tensor(d1, dtype=torch.float64)).to(CDTYPE)
    state = State.tensor(D1 / torch.trace(D1).real, ctensor(d2) / torch.trace(ctensor(d2)).real)
    levels = [
        block_subalgebra([(1, 2), (1, 2)]),
        block_subalgebra([(2, 2)]),
        full_algebra(4),
    ]
    return validate_filtration(state, levels)


##$#############################################################################
##^# martingales ###############################################################
@dataclass
class Martingale:
    """Element ``x`` with its adapted sequence ``x_n = E_n(x)`` and differences."""

    x: Tensor
    filtration: object
    xs: List[Tensor]
    ds: List[Tensor]

    @property
    def nlevels(self):
        return len(self.xs)

    def term(self, n: int) -> Tensor:
        """``x_n`` with ``x_{-1} = 0``."""
        return self.xs[n] if n >= 0 else torch.zeros_like(self.x)

    def adjoint(self):
        return decompose(ct(self.x), self.filtration)

    def scaled(self, lam):
        return decompose(lam * self.x, self.filtration)

    def dense(self):
        filt = self.filtration
        if isinstance(filt, Filtration):
            return self
        return decompose(filt.to_dense(self.x), filt.dense())


def decompose(x: Tensor, filtration) -> Martingale:
    """Adapted sequence and martingale differences of ``x``.

    Args:
        x: element of the ambient algebra of ``filtration``
        filtration: ``Filtration`` or ``DyadicFiltration``
    Returns:
        ``Martingale`` with ``x_n = E_n(x)`` and ``d_n = x_n - x_{n-1}``
    """
    x = ctensor(x)
    if tuple(x.shape) != tuple(filtration.element_shape):
        raise DimensionMismatch(
            "element shape does not match the filtration",
            shape=tuple(x.shape),
            expected=tuple(filtration.element_shape),
        )
    if isinstance(filtration, Filtration) and not filtration.levels[-1].contains(x):
        raise DimensionMismatch("element is not in the ambient algebra of the filtration")
    xs = [filtration.expect(n, x) for n in range(filtration.nlevels)]
    ds = [xs[0]] + [xs[n] - xs[n - 1] for n in range(1, len(xs))]
    return Martingale(x, filtration, xs, ds)


class SquareFunctions(NamedTuple):
    col: Tensor
    row: Tensor
    conditioned: Dict[Tuple[int, int], Tensor]


def square_functions(mart: Martingale) -> SquareFunctions:
    """Column/row square functions and the conditioned terms ``s_{c,n,m}``.

    ``s_{c,n,m} = E_n((x_m - x_{n-1})^* (x_m - x_{n-1}))`` for all ``n <= m``.
    """
    col = sum(ct(d) @ d for d in mart.ds)
    row = sum(d @ ct(d) for d in mart.ds)
    filt, conditioned = mart.filtration, {}
    for m in range(mart.nlevels):
        for n in range(m + 1):
            y = mart.xs[m] - mart.term(n - 1)
            conditioned[(n, m)] = herm(filt.expect(n, ct(y) @ y))
    return SquareFunctions(col, row, conditioned)


##$#############################################################################
##^# constructors ##############################################################
def rademacher_functions(n: int) -> Tensor:
    """Signs ``r_k(omega)`` of shape ``(n, 2^n)``; ``r_k`` is the ``k``-th binary digit sign."""
    omega = torch.arange(2 ** n)
    ks = torch.arange(1, n + 1)[:, None]
    return 1.0 - 2.0 * ((omega[None, :] // 2 ** (n - ks)) % 2).to(torch.float64)


def rademacher_matrix_martingale(n: int, exact: bool = False, constant_signs: bool = False):
    """Martingale ``x = sum_k r_k (x) e_{1k}`` on the dyadic filtration with fiber ``M_n``.

    Args:
        n: number of differences (= depth = fiber size)
        exact: use the dense filtration (``n <= 4``) instead of the compressed one
        constant_signs: replace the Rademacher functions by the constant ``+1``
    Returns:
        ``(filtration, martingale)`` with normalized-trace state
    """
    if n < 1:
        raise BadSpec("n must be positive", n=n)
    filt = compressed_dyadic_filtration(n, n)
    r = torch.ones((n, 2 ** n), dtype=torch.float64) if constant_signs else rademacher_functions(n)
    x = torch.zeros((2 ** n, n, n), dtype=CDTYPE)
    x[:, 0, :] = r.T.to(CDTYPE)
    if exact:
        dense = filt.dense()
        return dense, decompose(filt.to_dense(x), dense)
    return filt, decompose(x, filt)


def random_martingale(
    filtration,
    seed: int,
    normalize: str = "bmo",
    hermitian: bool = False,
    diagonal: bool = False,
    p: float = 2.0,
) -> Martingale:
    """Random element of the ambient algebra, decomposed and rescaled.

    Args:
        filtration: ``Filtration`` or ``DyadicFiltration``
        seed: generator seed
        normalize: ``"bmo"``, ``"lp"`` (at exponent ``p``, symmetric embedding) or ``"none"``
        hermitian: symmetrize ``x``
        diagonal: keep only the diagonal (commutative ensembles)
    """
    gen = make_generator(seed)
    x = randn_complex(tuple(filtration.element_shape), gen)
    if diagonal:
        x = torch.diag_embed(x.diagonal(0, -2, -1))
    if hermitian:
        x = herm(x)
    x = filtration.expect(filtration.nlevels - 1, x)
    mart = decompose(x, filtration)
    if normalize == "none":
        return mart
    if normalize == "bmo":
        from .norms import bmo

        scale = float(bmo(mart))
    elif normalize == "lp":
        scale = float(filtration.lp_norm(x, p, 0.5))
    else:
        raise ValueError("unknown normalization [%s]" % normalize)
    return mart if scale == 0.0 else mart.scaled(1.0 / scale)


##$#############################################################################
