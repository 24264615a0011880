##^# library imports ###########################################################
import math
from dataclasses import dataclass, field
from typing import List, Optional

import torch
from torch import Tensor

from . import linalg
from .errors import (
    DimensionMismatch,
    BadSpec,
    NotIncreasing,
    NotModularInvariant,
    StateNotFaithful,
)
from .utils import CDTYPE, ctensor, ct, herm, fro, trace, eye, vec, unvec
from .utils import make_generator

MEMBER_TOL = 1e-9
TRACE_TOL = 1e-12
MODULAR_TOL = 1e-8
CP_TOL = 1e-9
CP_CHECK_MAX_DIM = 16
CENTER_MAX_DIM = 1024

##$#############################################################################
##^# states ####################################################################
class State:
    """Faithful state ``phi(x) = Tr(D x)`` given by a density matrix ``D``."""

    def __init__(self, density):
        D = ctensor(density)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DimensionMismatch("density must be square", shape=tuple(D.shape))
        linalg.check_hermitian(D)
        D = herm(D)
        tr = trace(D)
        if abs(float(tr.real) - 1.0) > TRACE_TOL or abs(float(tr.imag)) > TRACE_TOL:
            raise BadSpec("density must satisfy trace(density) = 1", trace=float(tr.real))
        self.density = D
        self.eig = linalg.herm_eig(D)
        if float(self.eig.eigenvalues[0]) <= linalg.RANK_TOL:
            raise StateNotFaithful(
                "density is not strictly positive",
                min_eig=float(self.eig.eigenvalues[0]),
            )
        self._powers = {}

    @property
    def dim(self):
        return self.density.shape[-1]

    def power(self, s: float) -> Tensor:
        if s not in self._powers:
            lam, U = self.eig
            self._powers[s] = (U * (lam ** s)[None, :].to(CDTYPE)) @ ct(U)
        return self._powers[s]

    def phi(self, x: Tensor) -> Tensor:
        return trace(self.density @ x)

    def is_tracial(self, tol=1e-12):
        return bool(fro(self.density - eye(self.dim) / self.dim) <= tol)

    @classmethod
    def tracial(cls, n: int):
        return cls(eye(n) / n)

    @classmethod
    def from_weights(cls, weights):
        w = torch.as_tensor(weights, dtype=torch.float64)
        return cls(torch.diag(w / w.sum()).to(CDTYPE))

    @classmethod
    def tensor(cls, *factors):
        D = torch.ones((1, 1), dtype=CDTYPE)
        for f in factors:
            D = torch.kron(D, f.density if isinstance(f, State) else ctensor(f))
        return cls(D)


def modular_flow(state: State, x: Tensor, t: float) -> Tensor:
    """``D^{it} x D^{-it}``."""
    lam, U = state.eig
    u = (U * torch.exp(1j * t * torch.log(lam))[None, :]) @ ct(U)
    return u @ x @ ct(u)


##$#############################################################################
##^# subalgebras ###############################################################
class Subalgebra:
    """Unital *-subalgebra of ``M_N`` stored by a trace-orthonormal basis."""

    def __init__(self, basis: Tensor, central_projections=None):
        self.basis = basis.to(CDTYPE)
        self._flat = vec(self.basis)
        self._central = central_projections

    @property
    def ambient_dim(self):
        return self.basis.shape[-1]

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def is_full(self):
        return self.dim == self.ambient_dim ** 2

    @property
    def contains_unit(self):
        return self.contains(eye(self.ambient_dim))

    def coords(self, X: Tensor) -> Tensor:
        return vec(X.to(CDTYPE)) @ self._flat.conj().T

    def from_coords(self, c: Tensor) -> Tensor:
        return unvec(c.to(CDTYPE) @ self._flat, self.ambient_dim)

    def project(self, X: Tensor) -> Tensor:
        return self.from_coords(self.coords(X))

    def residual(self, X: Tensor) -> Tensor:
        return fro(X - self.project(X)) / torch.clamp(fro(X), min=1.0)

    def contains(self, X: Tensor, tol: float = MEMBER_TOL) -> bool:
        return bool(torch.all(self.residual(X) <= tol))

    @classmethod
    def from_spanning_set(cls, mats: Tensor, tol: float = 1e-10):
        N = mats.shape[-1]
        M = vec(mats.to(CDTYPE).reshape(-1, N, N))
        _, S, Vh = torch.linalg.svd(M, full_matrices=False)
        rank = int(torch.sum(S > tol * S[0]))
        return cls(unvec(Vh[:rank], N))

    def central_projections(self) -> List[Tensor]:
        """Minimal central projections, computed once and cached."""
        if self._central is None:
            self._central = _central_projections(self)
        return self._central


def _central_projections(alg: Subalgebra):
    N = alg.ambient_dim
    if alg.is_full or alg.dim > CENTER_MAX_DIM:
        return [eye(N)]
    gen = make_generator(7919)
    hs = [
        herm(alg.from_coords(torch.randn(alg.dim, generator=gen, dtype=torch.float64)))
        for _ in range(2)
    ]
    # two generic self-adjoint elements generate the algebra, so their relative
    # commutant is the center
    cols = [vec(alg.basis @ h - h @ alg.basis) for h in hs]
    M = torch.cat(cols, -1).T
    _, S, Vh = torch.linalg.svd(M, full_matrices=True)
    rank = int(torch.sum(S > 1e-9 * torch.clamp(S[0], min=1.0)))
    Z = alg.from_coords(Vh[rank:].conj())
    r = torch.randn(Z.shape[0], generator=gen, dtype=torch.float64).to(CDTYPE)
    z = herm(torch.einsum("k,kij->ij", r, Z))
    lam, U = linalg.herm_eig(z)
    gaps = torch.diff(lam) > 1e-6 * (1.0 + float(lam.abs().max()))
    cuts = [0] + [i + 1 for i in torch.nonzero(gaps).flatten().tolist()] + [N]
    return [U[:, a:b] @ ct(U[:, a:b]) for (a, b) in zip(cuts[:-1], cuts[1:])]


def build_subalgebra(ambient_dim: int, generators) -> Subalgebra:
    """Smallest unital *-subalgebra of ``M_N`` containing ``generators``.

    Args:
        ambient_dim: ``N``
        generators: iterable of ``N x N`` matrices
    Returns:
        ``Subalgebra`` spanned by all words in the generators and their adjoints
    """
    gens = [ctensor(g) for g in generators]
    for g in gens:
        if tuple(g.shape) != (ambient_dim, ambient_dim):
            raise DimensionMismatch(
                "generator shape does not match the ambient dimension",
                shape=tuple(g.shape),
                ambient_dim=ambient_dim,
            )
    G = torch.stack(gens + [ct(g) for g in gens]) if len(gens) > 0 else None
    alg = Subalgebra.from_spanning_set(eye(ambient_dim)[None])
    while G is not None:
        words = (alg.basis[:, None] @ G[None]).reshape(-1, ambient_dim, ambient_dim)
        new = Subalgebra.from_spanning_set(torch.cat([alg.basis, words]))
        if new.dim == alg.dim:
            break
        alg = new
    return alg


def block_subalgebra(spec, ambient_dim: Optional[int] = None) -> Subalgebra:
    """Subalgebra ``(+)_k M_{d_k} (x) 1_{m_k}`` in canonical block layout.

    Block ``k`` occupies a contiguous range of ``d_k * m_k`` indices, with the
    ``M_{d_k}`` index major.

    Args:
        spec: list of ``(block_size, multiplicity)`` pairs
        ambient_dim: optional ``N`` to check ``sum d_k m_k`` against
    Returns:
        ``Subalgebra`` whose basis are the normalized matrix units, with its
        central projections precomputed
    """
    spec = [(int(d), int(m)) for (d, m) in spec]
    if len(spec) == 0 or any(d < 1 or m < 1 for (d, m) in spec):
        raise BadSpec("block sizes and multiplicities must be positive", spec=spec)
    N = sum(d * m for (d, m) in spec)
    if ambient_dim is not None and N != ambient_dim:
        raise BadSpec("block spec does not fill the ambient dimension", N=N, ambient_dim=ambient_dim)
    basis, central, off = [], [], 0
    for (d, m) in spec:
        P = torch.zeros((N, N), dtype=CDTYPE)
        P[off : off + d * m, off : off + d * m] = eye(d * m)
        central.append(P)
        for i in range(d):
            for j in range(d):
                E = torch.zeros((d, d), dtype=CDTYPE)
                E[i, j] = 1.0
                B = torch.zeros((N, N), dtype=CDTYPE)
                B[off : off + d * m, off : off + d * m] = torch.kron(E, eye(m)) / math.sqrt(m)
                basis.append(B)
        off += d * m
    return Subalgebra(torch.stack(basis), central_projections=central)


def full_algebra(n: int) -> Subalgebra:
    return block_subalgebra([(n, 1)])


##$#############################################################################
##^# filtrations ###############################################################
class Filtration:
    """Validated increasing chain of subalgebras with their conditional expectations.

    Elements are ``N x N`` matrices; every method accepts a leading batch.
    """

    def __init__(self, state: State, levels: List[Subalgebra], cond_exps: List[Tensor]):
        self.state, self.levels, self.cond_exps = state, levels, cond_exps
        self._ext = {}

    @property
    def nlevels(self):
        return len(self.levels)

    @property
    def dim(self):
        return self.state.dim

    @property
    def element_shape(self):
        return (self.dim, self.dim)

    def identity(self):
        return eye(self.dim)

    def expect(self, n: int, x: Tensor) -> Tensor:
        if n < 0:
            return torch.zeros_like(x, dtype=CDTYPE)
        return unvec(vec(x.to(CDTYPE)) @ self.cond_exps[n].T, self.dim)

    def lp_extension(self, n: int, p: float) -> Tensor:
        """Superoperator of ``E_n`` acting on ``L_p``: ``z -> D^{1/p} E_n(D^{-1/p} z)``."""
        if math.isinf(p) or n < 0:
            return self.cond_exps[n] if n >= 0 else torch.zeros_like(self.cond_exps[0])
        if (n, p) not in self._ext:
            I = eye(self.dim)
            L = torch.kron(self.state.power(1.0 / p), I)
            Linv = torch.kron(self.state.power(-1.0 / p), I)
            self._ext[(n, p)] = L @ self.cond_exps[n] @ Linv
        return self._ext[(n, p)]

    def expect_lp(self, n: int, z: Tensor, p: float) -> Tensor:
        if n < 0:
            return torch.zeros_like(z, dtype=CDTYPE)
        return unvec(vec(z.to(CDTYPE)) @ self.lp_extension(n, p).T, self.dim)

    def phi(self, x: Tensor) -> Tensor:
        return self.state.phi(x)

    def embed(self, x: Tensor, p: float, eta: float = 0.5) -> Tensor:
        return embed_lp(self.state, x, p, eta).matrix

    def lp_norm(self, x: Tensor, p: float, eta: float = 0.5) -> Tensor:
        return lp_norm(self.state, x, p, eta)

    def schatten(self, z: Tensor, p: float) -> Tensor:
        return linalg.schatten_norm(z, p)

    def opnorm(self, x: Tensor) -> Tensor:
        return linalg.opnorm(x)

    def level(self, n: int) -> Subalgebra:
        return self.levels[n]

    def dense(self):
        return self

    def to_dense(self, x: Tensor) -> Tensor:
        return x

    def is_commutative(self, tol: float = 1e-10):
        from .utils import is_diagonal

        return is_diagonal(self.state.density, tol) and all(
            is_diagonal(lvl.basis, tol) for lvl in self.levels
        )


def _phi_orthonormal_basis(state: State, alg: Subalgebra) -> Tensor:
    B = alg.basis
    # G[i, j] = Tr(D B_i^* B_j)
    G = herm(torch.einsum("ab,ibc,jca->ij", state.density, ct(B), B))
    W = linalg.mat_power(G, -0.5)
    return torch.einsum("jab,ji->iab", B, W)


def _build_cond_exp(state: State, alg: Subalgebra) -> Tensor:
    F = _phi_orthonormal_basis(state, alg)
    FD = F @ state.density
    return vec(F).T @ vec(FD).conj()


def choi_matrix(E: Tensor) -> Tensor:
    """Choi matrix ``sum_ij e_ij (x) E(e_ij)`` of a superoperator on row-major vectors."""
    N = int(round(math.sqrt(E.shape[-1])))
    return E.reshape(N, N, N, N).permute(2, 0, 3, 1).reshape(N * N, N * N)


def validate_filtration(state: State, levels: List[Subalgebra], check_cp=None) -> Filtration:
    """Check the filtration axioms and build the conditional expectations.

    Args:
        state: faithful state on ``M_N``
        levels: subalgebras ``N_0, ..., N_M``; the last one is the ambient
            algebra the martingales live in (``M_N`` or a subalgebra of it)
        check_cp: whether to verify complete positivity through the Choi
            matrix; by default only for ``N <= 16``
    Returns:
        ``Filtration`` with cached conditional expectations
    """
    if len(levels) == 0:
        raise BadSpec("a filtration needs at least one level")
    N = state.dim
    for (k, lvl) in enumerate(levels):
        if lvl.ambient_dim != N:
            raise DimensionMismatch("level does not live in M_N", level=k, N=N)
        if not lvl.contains_unit:
            raise BadSpec("level is not unital", level=k)
    for k in range(len(levels) - 1):
        res = float(torch.max(levels[k + 1].residual(levels[k].basis)))
        if res > MEMBER_TOL or levels[k].dim >= levels[k + 1].dim:
            raise NotIncreasing("levels are not strictly increasing", level=k, residual=res)
    if float(state.eig.eigenvalues[0]) <= linalg.RANK_TOL:
        raise StateNotFaithful("density is not strictly positive")

    D, Dinv = state.density, state.power(-1.0)
    for (k, lvl) in enumerate(levels):
        res = float(torch.max(lvl.residual(D @ lvl.basis @ Dinv)))
        if res > MODULAR_TOL:
            raise NotModularInvariant("level is not invariant under Ad_D", level=k, residual=res)

    cond_exps = [_build_cond_exp(state, lvl) for lvl in levels]
    check_cp = N <= CP_CHECK_MAX_DIM if check_cp is None else check_cp
    I = vec(eye(N))
    for (k, E) in enumerate(cond_exps):
        scale = max(1.0, float(fro(E)))
        if float(torch.linalg.norm(E @ I - I)) > 1e-9 * scale:
            raise RuntimeError("conditional expectation %d is not unital" % k)
        if float(fro(E @ E - E)) > 1e-9 * scale:
            raise RuntimeError("conditional expectation %d is not idempotent" % k)
        # phi o E = phi
        if float(torch.linalg.norm(vec(state.density.T) @ (E - eye(N * N)))) > 1e-9 * scale:
            raise RuntimeError("conditional expectation %d does not preserve the state" % k)
        if check_cp and float(linalg.min_eig(choi_matrix(E))) < -CP_TOL:
            raise RuntimeError("conditional expectation %d is not completely positive" % k)
    return Filtration(state, list(levels), cond_exps)


def conditional_expectation(filtration: Filtration, n: int) -> Tensor:
    """Superoperator of ``E_n`` on row-major vectors; ``E_{-1} = 0``."""
    if n < 0:
        return torch.zeros_like(filtration.cond_exps[0])
    return filtration.cond_exps[n]


##$#############################################################################
##^# L_p embeddings ############################################################
@dataclass
class LpElement:
    matrix: Tensor
    p: float
    eta: float
    provenance: Optional[Tensor] = field(default=None, repr=False)


def kosaki_map(state: State, x: Tensor, q: float, p: float, eta: float = 0.5) -> Tensor:
    """``I_{q,p}^eta(x) = D^{(1-eta) r} x D^{eta r}`` with ``r = 1/p - 1/q``, ``p <= q``."""
    linalg.check_exponent(p)
    assert 0.0 <= eta <= 1.0 and p <= q
    r = 1.0 / p - (0.0 if math.isinf(q) else 1.0 / q)
    if r == 0.0:
        return x.to(CDTYPE)
    return state.power((1.0 - eta) * r) @ x.to(CDTYPE) @ state.power(eta * r)


def embed_lp(state: State, x: Tensor, p: float, eta: float = 0.5) -> LpElement:
    """Kosaki embedding ``x -> D^{(1-eta)/p} x D^{eta/p}`` of the algebra into ``L_p``."""
    return LpElement(kosaki_map(state, x, math.inf, p, eta), p, eta, provenance=x)


def lp_norm(state: State, x: Tensor, p: float, eta: float = 0.5) -> Tensor:
    return linalg.schatten_norm(embed_lp(state, x, p, eta).matrix, p)


##$#############################################################################
