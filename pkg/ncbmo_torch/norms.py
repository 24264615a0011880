##^# library imports ###########################################################
import math
from dataclasses import dataclass, field
from typing import Any, List, NamedTuple, Optional, Tuple

import torch
from torch import Tensor

from . import linalg
from .errors import NotPSD, NotCommutative, LengthMismatch
from .extras.optimization import maximize_ascent, multistart
from .martingale import Martingale, square_functions
from .utils import CDTYPE, ct, herm, diag, fro, eye, is_diagonal
from .utils import make_generator, sub_seed, randn_complex

##$#############################################################################
##^# reports ###################################################################
@dataclass
class NormReport:
    name: str
    value: float
    upper_bound: Optional[float] = None
    witness: Any = None
    iterations: int = 0
    restarts: int = 0
    converged: bool = True
    details: dict = field(default_factory=dict)

    def to_record(self):
        return dict(
            name=self.name,
            value=self.value,
            upper_bound=self.upper_bound,
            converged=self.converged,
            restarts=self.restarts,
            iterations=self.iterations,
        )


def _pairs(mart: Martingale):
    for m in range(mart.nlevels):
        for n in range(m + 1):
            yield (n, m)


def _dense(mart: Martingale) -> Martingale:
    return mart.dense()


##$#############################################################################
##^# BMO and conditioned L_inf #################################################
def bmo_c(mart: Martingale) -> float:
    """``sup_{n <= m} ||E_n((x_m - x_{n-1})^* (x_m - x_{n-1}))||^{1/2}``."""
    filt = mart.filtration
    sf = square_functions(mart)
    return max(float(filt.opnorm(s)) for s in sf.conditioned.values()) ** 0.5


def bmo_r(mart: Martingale) -> float:
    return bmo_c(mart.adjoint())


def bmo(mart: Martingale) -> float:
    return max(bmo_c(mart), bmo_r(mart))


def bmo_c_centered(mart: Martingale) -> float:
    """``sup_n ||E_n((x - x_n)^* (x - x_n))||^{1/2}``, bounded by ``bmo_c``."""
    filt, x = mart.filtration, mart.x
    vals = [filt.opnorm(filt.expect(n, ct(x - xn) @ (x - xn))) for (n, xn) in enumerate(mart.xs)]
    return max(float(v) for v in vals) ** 0.5


def conditioned_linf_c(mart: Martingale, n: int) -> float:
    """``||x||_{L_inf^c(E_n)} = ||E_n(x^* x)||^{1/2}``."""
    filt, x = mart.filtration, mart.x
    return float(filt.opnorm(filt.expect(n, ct(x) @ x))) ** 0.5


def conditioned_moment(mart: Martingale, p: float) -> float:
    """Experimental ``sup_n ||E_n(|x - x_{n-1}|^p)||^{1/p}``."""
    linalg.check_exponent(p)
    filt, x = mart.filtration, mart.x
    vals = []
    for n in range(mart.nlevels):
        y = x - mart.term(n - 1)
        vals.append(float(filt.opnorm(filt.expect(n, linalg.mat_power(herm(ct(y) @ y), p / 2.0, check=False)))))
    return max(vals) ** (1.0 / p)


##$#############################################################################
##^# Hardy norms ###############################################################
def _square_norm(terms, p, filt, row=False):
    S = sum((a @ ct(a)) if row else (ct(a) @ a) for a in terms)
    return float(filt.schatten(linalg.mat_power(herm(S), 0.5, check=False), p))


def hp_c(mart: Martingale, p: float, eta: float = 0.5) -> float:
    """Column Hardy norm ``||(sum_k |a_k|^2)^{1/2}||_p`` of the embedded differences."""
    linalg.check_exponent(p)
    filt = mart.filtration
    return _square_norm([filt.embed(d, p, eta) for d in mart.ds], p, filt)


def hp_r(mart: Martingale, p: float, eta: float = 0.5) -> float:
    linalg.check_exponent(p)
    filt = mart.filtration
    return _square_norm([filt.embed(d, p, eta) for d in mart.ds], p, filt, row=True)


def hp(mart: Martingale, p: float, eta: float = 0.5) -> float:
    return max(hp_c(mart, p, eta), hp_r(mart, p, eta))


##$#############################################################################
##^# Stein projection ##########################################################
def stein_projection(terms: List[Tensor], filtration, p: Optional[float] = None) -> List[Tensor]:
    """``(E_n(z_n))_n``; with ``p`` the terms are ``L_p`` elements and the
    ``L_p`` extensions of the conditional expectations are applied."""
    if len(terms) != filtration.nlevels:
        raise LengthMismatch("one term per level is required", terms=len(terms), levels=filtration.nlevels)
    if p is None:
        return [filtration.expect(n, z) for (n, z) in enumerate(terms)]
    return [filtration.expect_lp(n, z, p) for (n, z) in enumerate(terms)]


def lp_l2c_norm(zs: List[Tensor], p: float, filtration=None) -> float:
    """``||(sum_k z_k^* z_k)^{1/2}||_p``."""
    linalg.check_exponent(p)
    S = sum(ct(z) @ z for z in zs)
    R = linalg.mat_power(herm(S), 0.5, check=False)
    return float(linalg.schatten_norm(R, p) if filtration is None else filtration.schatten(R, p))


def lp_l2r_norm(zs: List[Tensor], p: float, filtration=None) -> float:
    return lp_l2c_norm([ct(z) for z in zs], p, filtration)


##$#############################################################################
##^# vector-valued sup-norm ####################################################
@dataclass
class SupNormProblem:
    """``||sup_k x_k||_q`` for PSD ``x_k``, by its dual program.

    ``factorization`` optionally supplies ``(a, [w_k])`` with ``x_k = a w_k a``,
    giving the upper bound ``sup_k ||w_k||_inf ||a||_{2q}^2``.
    """

    terms: List[Tensor]
    q: float
    factorization: Optional[Tuple[Tensor, List[Tensor]]] = None
    restarts: int = 4
    seed: int = 0
    max_it: int = 300


class SupNormBracket(NamedTuple):
    lower: float
    upper: float
    witness: Tensor


def _psd_stack(terms):
    X = torch.stack([t.to(CDTYPE) for t in terms])
    linalg.check_hermitian(X)
    X = herm(X)
    lam = linalg.eigvalsh(X)
    scale = torch.clamp(lam.abs().max(-1).values, min=1.0)
    if bool(torch.any(lam[..., 0] < -1e-9 * scale)):
        raise NotPSD("sup-norm terms must be positive semidefinite", min_eig=float(lam[..., 0].min()))
    return X


def _dual_value(X, Y):
    return float(torch.sum(torch.einsum("kij,kji->k", X, Y).real))


def _scale_feasible(Y, qc):
    s = float(linalg.schatten_norm(Y.sum(0), qc))
    return Y / s if s > 0 else Y


def sup_norm_bracket(problem: SupNormProblem) -> SupNormBracket:
    """Lower and upper bounds for ``||sup_k x_k||_q``.

    The lower bound is the best feasible dual value
    ``sum_k Tr(x_k y_k)`` with ``y_k >= 0``, ``||sum_k y_k||_{q'} <= 1`` found by
    projected ascent (eigenvalue clipping then scaling) from structured and
    random starts. The upper bound is ``||sum_k x_k||_q``, improved by a caller
    factorization and, on diagonal data, by the pointwise maximum.
    """
    X = _psd_stack(problem.terms)
    q = problem.q
    linalg.check_exponent(q)
    K, N = X.shape[0], X.shape[-1]
    if math.isinf(q):
        vals = linalg.opnorm(X)
        k = int(torch.argmax(vals))
        lam, U = linalg.herm_eig(X[k])
        Y = torch.zeros_like(X)
        Y[k] = U[:, -1:] @ ct(U[:, -1:])
        return SupNormBracket(float(vals[k]), float(vals[k]), Y)
    qc = linalg.conjugate_exponent(q)

    upper = float(linalg.schatten_norm(X.sum(0), q))
    if problem.factorization is not None:
        a, ws = problem.factorization
        ws = torch.stack([w.to(CDTYPE) for w in ws])
        if float(fro(a @ ws @ a - X).max()) > 1e-9 * max(1.0, float(fro(X).max())):
            raise ValueError("factorization does not reproduce the terms")
        upper = min(upper, float(linalg.opnorm(ws).max()) * float(linalg.schatten_norm(a, 2 * q)) ** 2)
    diagonal = is_diagonal(X)
    if diagonal:
        M = diag(X).real.clamp(min=0.0).max(0).values
        upper = min(upper, float(torch.sum(M ** q) ** (1.0 / q)))

    if K == 1:
        nrm = float(linalg.schatten_norm(X[0], q))
        Y = torch.zeros_like(X)
        if nrm > 0:
            Y[0] = linalg.mat_power(X[0], q - 1.0, check=False) / nrm ** (q - 1.0)
        return SupNormBracket(nrm, nrm, Y)

    def to_y(theta):
        return herm(torch.view_as_complex(theta.contiguous()))

    def f_fn(theta):
        Y = to_y(theta)
        den = linalg.schatten_norm(Y.sum(0), qc)
        return torch.sum(torch.einsum("kij,kji->k", X, Y).real) / den

    def project_fn(theta):
        Y = _scale_feasible(linalg.psd_part(to_y(theta)), qc)
        return torch.view_as_real(Y).clone()

    seeds = []
    Md = diag(X).real.clamp(min=0.0)
    M, kstar = Md.max(0)
    if float(M.max()) > 0:
        Yd = torch.zeros_like(X)
        Yd[kstar, torch.arange(N), torch.arange(N)] = (M ** (q - 1.0)).to(CDTYPE)
        seeds.append(Yd)
    seeds.append(linalg.mat_power(X, q - 1.0, check=False) + 1e-12 * eye(N))
    gen = make_generator(sub_seed(problem.seed, K, N))
    for _ in range(problem.restarts):
        G = randn_complex((K, N, N), gen)
        seeds.append(G @ ct(G))

    best_val, best_Y, seed_vals = -math.inf, None, []
    for (i, Y0) in enumerate(seeds):
        theta0 = torch.view_as_real(herm(Y0)).clone()
        if i == 0 and diagonal:
            Y = _scale_feasible(herm(Y0), qc)
        else:
            res = maximize_ascent(f_fn, theta0, project_fn=project_fn, max_it=problem.max_it)
            Y = _scale_feasible(linalg.psd_part(to_y(res.x)), qc)
        val = _dual_value(X, Y)
        if val > best_val:
            best_val, best_Y = val, Y
    return SupNormBracket(best_val, upper, best_Y)


##$#############################################################################
##^# L_p^cMO ###################################################################
def lp_c_mo(mart: Martingale, p: float, restarts: int = 4, seed: int = 0, max_it: int = 300) -> NormReport:
    """``sup_m ||sup_{n <= m} D^{1/p} s_{c,n,m} D^{1/p}||_{p/2}^{1/2}`` as a bracket."""
    linalg.check_exponent(p, 2.0)
    mart = _dense(mart)
    filt = mart.filtration
    sf = square_functions(mart)
    lower, upper, witness = 0.0, 0.0, None
    for m in range(mart.nlevels):
        terms = [filt.embed(sf.conditioned[(n, m)], p / 2.0, 0.5) for n in range(m + 1)]
        terms = [herm(t) for t in terms]
        br = sup_norm_bracket(SupNormProblem(terms, p / 2.0, restarts=restarts, seed=sub_seed(seed, m), max_it=max_it))
        lo, up = max(br.lower, 0.0) ** 0.5, max(br.upper, 0.0) ** 0.5
        if lo >= lower:
            lower, witness = lo, dict(m=m, y=br.witness)
        upper = max(upper, up)
    return NormReport("lp_c_mo", lower, upper_bound=upper, witness=witness, restarts=restarts)


##$#############################################################################
##^# BMO_p #####################################################################
def bmo_p_ratio(mart: Martingale, n: int, m: int, a: Tensor, p: float) -> float:
    """``||(x_m - x_{n-1}) a||_p / ||a||_p`` for a witness ``a``."""
    y = mart.xs[m] - mart.term(n - 1)
    den = float(linalg.schatten_norm(a, p))
    return float(linalg.schatten_norm(y @ a, p)) / den if den > 0 else 0.0


def _top_projection(s: Tensor, rtol: float = 1e-12) -> Tensor:
    lam, U = linalg.herm_eig(s)
    sel = lam >= lam[-1] - rtol * max(1.0, float(lam[-1].abs()))
    V = U[:, sel]
    return V @ ct(V)


class _PairObjective:
    """``a -> ||y a||_p / ||a||_p`` on the basis coordinates of ``N_n``."""

    def __init__(self, y, alg, Dp, Dh, p, positive):
        self.y, self.alg, self.Dp, self.Dh, self.p, self.positive = y, alg, Dp, Dh, p, positive

    def param(self, theta):
        return self.alg.from_coords(torch.view_as_complex(theta.contiguous()))

    def to_a(self, theta):
        b = self.param(theta)
        return self.Dh @ (b @ ct(b)) @ self.Dh if self.positive else b @ self.Dp

    def value(self, theta):
        a = self.to_a(theta)
        return linalg.schatten_norm(self.y @ a, self.p) / linalg.schatten_norm(a, self.p)

    def project(self, theta):
        s = float(linalg.schatten_norm(self.to_a(theta), self.p))
        if s <= 0 or not math.isfinite(s):
            return theta
        return theta / (s ** 0.5 if self.positive else s)

    def gap(self, theta):
        ya = self.y @ self.to_a(theta)
        return linalg.eig_gap(herm(ct(ya) @ ya))

    def coords(self, B):
        return torch.view_as_real(self.alg.coords(B)).clone()


def bmo_p_c(
    mart: Martingale,
    p: float,
    restarts: int = 8,
    seed: int = 0,
    positive: bool = False,
    max_it: int = 300,
    polish: bool = False,
    warm_start: Optional[NormReport] = None,
    c_upper: float = 16.0,
    rtol: float = 1e-9,
    prune: float = 0.0,
) -> NormReport:
    """Certified lower bound for the column ``BMO_p`` norm.

    For every pair ``n <= m`` maximizes ``||(x_m - x_{n-1}) a||_p / ||a||_p`` over
    ``a = b D^{1/p}`` with ``b`` in ``N_n`` (or ``a = D^{1/2p} g g^* D^{1/2p}``,
    ``g`` in ``N_n``, when ``positive``). Starts: the previous witness from
    ``warm_start``, the top spectral projection of ``s_{c,n,m}``, the minimal
    central projections of ``N_n``, the unit and random coordinates.

    Args:
        mart: martingale (compressed filtrations are densified)
        p: exponent in ``[2, inf]``
        restarts: number of optimized starts per pair
        seed: per-call seed of the random starts
        positive: restrict to positive multipliers
        max_it: ascent iterations per start
        polish: refine every start with L-BFGS
        warm_start: report from another exponent whose witnesses seed this run
        c_upper: constant of the reported upper companion ``c p ||x||_BMO``
        rtol: relative improvement over 20 ascent steps treated as converged
        prune: pairs whose best structured or warm start is below ``prune`` times
            the best such value over all pairs keep that start without ascent
    Returns:
        ``NormReport`` whose witness is ``dict(n, m, a)``
    """
    linalg.check_exponent(p, 2.0)
    mart = _dense(mart)
    filt = mart.filtration
    upper = c_upper * (p if math.isfinite(p) else 1.0) * bmo(mart)
    if math.isinf(p):
        best = (0.0, None)
        for (n, m) in _pairs(mart):
            v = float(linalg.opnorm(mart.xs[m] - mart.term(n - 1)))
            if v > best[0] or best[1] is None:
                best = (v, dict(n=n, m=m, a=eye(filt.dim)))
        return NormReport("bmo_p_c", best[0], upper_bound=best[0], witness=best[1])

    st = filt.state
    Dp, Dh = st.power(1.0 / p), st.power(0.5 / p)
    warm = {} if warm_start is None or warm_start.witness is None else warm_start.details.get("pair_witnesses", {})

    # structured starts of every pair first; the top projection gives the seeded value
    problems, seeded_val = {}, 0.0
    for (n, m) in _pairs(mart):
        y = mart.xs[m] - mart.term(n - 1)
        if float(fro(y)) <= 1e-14:
            continue
        ob = _PairObjective(y, filt.level(n), Dp, Dh, p, positive)
        P = _top_projection(filt.expect(n, herm(ct(y) @ y)))
        structured = [ob.coords(P)]
        structured += [ob.coords(C) for C in ob.alg.central_projections()]
        structured.append(ob.coords(eye(filt.dim)))
        if (n, m) in warm:
            structured.append(ob.coords(warm[(n, m)]))
        with torch.no_grad():
            vals = [float(ob.value(ob.project(th))) for th in structured]
        seeded_val = max(seeded_val, vals[0])
        problems[(n, m)] = (ob, structured, vals)
    best_structured = max((max(vals) for (_, _, vals) in problems.values()), default=0.0)

    best_val, best_w, total_it, converged, fallbacks = 0.0, None, 0, True, 0
    pair_witnesses = {}
    for ((n, m), (ob, structured, vals)) in problems.items():
        # the warm witness (last entry) goes first, then the top projection
        nwarm = int((n, m) in warm)
        order = [0] + sorted(range(1, len(structured) - nwarm), key=lambda i: (-vals[i], i))
        if nwarm:
            order = [len(structured) - 1] + order
        if max(vals) < prune * best_structured:
            thetas = [ob.project(structured[max(range(len(vals)), key=lambda i: (vals[i], -i))])]
        else:
            starts = [structured[i] for i in order[: min(len(order), nwarm + max(1, restarts // 2))]]
            gen = make_generator(sub_seed(seed, n, m))
            for _ in range(max(restarts - len(starts), 0)):
                starts.append(torch.randn((ob.alg.dim, 2), generator=gen, dtype=torch.float64))
            starts = starts[: max(restarts, 1)]
            _, results = multistart(
                ob.value, starts, polish=polish, project_fn=ob.project, max_it=max_it, rtol=rtol, gap_fn=ob.gap
            )
            total_it += sum(res.iterations for res in results)
            fallbacks += sum(res.fallbacks for res in results)
            converged = converged and results[0].converged
            thetas = [res.x for res in results]
        for theta in thetas:
            a = ob.to_a(theta).detach()
            val = bmo_p_ratio(mart, n, m, a, p)
            if (n, m) not in pair_witnesses or val > pair_witnesses[(n, m)][0]:
                pair_witnesses[(n, m)] = (val, ob.param(theta).detach())
            if val > best_val:
                best_val, best_w = val, dict(n=n, m=m, a=a)
    if best_w is None:
        best_w = dict(n=0, m=0, a=Dp)
    details = dict(
        seeded_value=seeded_val,
        fallbacks=fallbacks,
        pair_witnesses={k: v[1] for (k, v) in pair_witnesses.items()},
        positive=positive,
    )
    return NormReport(
        "bmo_p_c",
        best_val,
        upper_bound=upper,
        witness=best_w,
        iterations=total_it,
        restarts=restarts,
        converged=converged,
        details=details,
    )


def bmo_p(mart: Martingale, p: float, warm_start: Optional[NormReport] = None, **kw) -> NormReport:
    """``max(||x||_{BMO_p^c}, ||x^*||_{BMO_p^c})``, witness tagged with its side.

    ``warm_start`` is a ``bmo_p`` report at another exponent; each side is
    seeded from the witnesses of the same side.
    """
    details = {} if warm_start is None else warm_start.details
    col = bmo_p_c(mart, p, warm_start=details.get("col_report"), **kw)
    row = bmo_p_c(mart.adjoint(), p, warm_start=details.get("row_report"), **kw)
    best, side = (col, "col") if col.value >= row.value else (row, "row")
    witness = dict(best.witness or {}, side=side)
    details = dict(
        seeded_value=max(col.details.get("seeded_value", col.value), row.details.get("seeded_value", row.value)),
        col=col.value,
        row=row.value,
        col_report=col,
        row_report=row,
    )
    return NormReport(
        "bmo_p",
        best.value,
        upper_bound=max(col.upper_bound, row.upper_bound),
        witness=witness,
        iterations=col.iterations + row.iterations,
        restarts=best.restarts,
        converged=col.converged and row.converged,
        details=details,
    )


##$#############################################################################
##^# commutative oracles #######################################################
def _check_commutative(mart: Martingale):
    filt = mart.filtration
    if not (filt.is_commutative() and is_diagonal(mart.x)):
        raise NotCommutative("filtration and element must be simultaneously diagonal")


def classical_bmo_p_oracle(mart: Martingale, p: float) -> float:
    """``sup_{n <= m} ||E_n(|x_m - x_{n-1}|^p)||_inf^{1/p}`` on commutative instances."""
    linalg.check_exponent(p)
    _check_commutative(mart)
    filt, best = mart.filtration, 0.0
    for (n, m) in _pairs(mart):
        y = diag(mart.xs[m] - mart.term(n - 1)).abs() ** p
        v = diag(filt.expect(n, torch.diag_embed(y.to(CDTYPE)))).real
        best = max(best, float(v.max()))
    return best ** (1.0 / p)


def classical_bmo_exponential(mart: Martingale, lam: float) -> float:
    """``sup_n ||E_n(exp(|x - x_{n-1}| / lam))||_inf`` on commutative instances."""
    _check_commutative(mart)
    filt, best = mart.filtration, 0.0
    for n in range(mart.nlevels):
        y = torch.exp(diag(mart.x - mart.term(n - 1)).abs() / lam)
        v = diag(filt.expect(n, torch.diag_embed(y.to(CDTYPE)))).real
        best = max(best, float(v.max()))
    return best


##$#############################################################################
