##^# library imports ###########################################################
import logging, math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import torch
from scipy import optimize, stats
from torch import Tensor
from tqdm import tqdm

from . import linalg
from .algebra import State, Filtration, validate_filtration, modular_flow, choi_matrix, lp_norm
from .algebra import block_subalgebra, full_algebra
from .errors import BadWitness, NotTracial, EmptyStream, NotCommutative, NcbmoError
from .interval import (
    Interval,
    StepFunction,
    covering_dyadic,
    interval_bmo_c,
    interval_comparison_check,
)
from .martingale import (
    Martingale,
    decompose,
    random_martingale,
    rademacher_matrix_martingale,
    dyadic_classical_filtration,
    classical_filtration,
    quantum_tensor_filtration,
)
from .norms import (
    bmo,
    bmo_c,
    bmo_r,
    bmo_c_centered,
    bmo_p,
    bmo_p_c,
    bmo_p_ratio,
    hp_c,
    lp_c_mo,
    classical_bmo_p_oracle,
    classical_bmo_exponential,
    stein_projection,
    lp_l2c_norm,
    lp_l2r_norm,
    sup_norm_bracket,
    SupNormProblem,
)
from .utils import CDTYPE, ctensor, ct, herm, fro, trace
from .utils import make_generator, sub_seed, randn_complex, random_psd

logger = logging.getLogger(__name__)

##$#############################################################################
##^# configuration and reports #################################################
@dataclass
class VerifyConfig:
    p_list: Sequence[float] = (3.0, 4.0, 6.0, 8.0, 12.0)
    eta_list: Sequence[float] = (0.0, 0.5, 1.0)
    t_list: Sequence[float] = (1.0, 2.0, 4.0, 8.0)
    ensemble_size: int = 200
    seed: int = 0
    c_jn: float = 16.0
    c1: Optional[float] = None
    c2: float = math.e
    c2_cap: float = 10.0
    c1_min: float = 0.05
    eta: float = 0.5
    restarts: int = 8
    warm_restarts: int = 1
    max_it: int = 300
    ascent_rtol: float = 1e-6
    prune: float = 0.75
    left_tol: float = 1e-6
    oracle_tol: float = 1e-5
    slope_band: float = 0.15
    positive_witness: bool = False
    keep_witnesses: bool = True
    axiom_samples: int = 200
    covering_samples: int = 10000
    interval_pairs: int = 1000
    progress: bool = False
    workers: int = 1

    def __post_init__(self):
        self.p_list = tuple(float(p) for p in self.p_list)
        self.eta_list = tuple(float(e) for e in self.eta_list)
        self.t_list = tuple(float(t) for t in self.t_list)
        if any(not (p >= 2.0) for p in self.p_list):
            raise ValueError("p_list must lie in [2, inf)")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class VerifyReport:
    name: str
    records: List[dict] = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    passed: bool = True
    flags: List[str] = field(default_factory=list)
    table: List[dict] = field(default_factory=list)

    def merge(self, other: "VerifyReport") -> "VerifyReport":
        constants = dict(self.constants)
        for (k, v) in other.constants.items():
            constants[k] = v if k not in constants else max(constants[k], v)
        return VerifyReport(
            self.name,
            self.records + other.records,
            constants,
            self.passed and other.passed,
            self.flags + other.flags,
            self.table + other.table,
        )

    def flag(self, msg: str, hard: bool = False):
        self.flags.append(msg)
        logger.warning("%s: %s", self.name, msg)
        if hard:
            self.passed = False

    def to_dict(self, include_witnesses: bool = True):
        records = self.records
        if not include_witnesses:
            records = [{k: v for (k, v) in r.items() if k != "witness"} for r in records]
        return dict(
            name=self.name,
            passed=self.passed,
            constants=self.constants,
            flags=self.flags,
            records=records,
            table=self.table,
        )


def _merge_all(name, reports):
    out = VerifyReport(name)
    for r in reports:
        out = out.merge(r)
    out.name = name
    return out


def _progress(it, config, desc):
    return tqdm(it, desc=desc, leave=False) if config.progress else it


def _map(fn, items, config, desc):
    # results keep the order of items
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            return list(ex.map(fn, items))
    return [fn(item) for item in _progress(items, config, desc)]


##$#############################################################################
##^# John-Nirenberg ############################################################
def _oracle_bmo_p(mart: Martingale, p: float):
    try:
        return max(classical_bmo_p_oracle(mart, p), classical_bmo_p_oracle(mart.adjoint(), p))
    except NotCommutative:
        return None


def check_jn(mart: Martingale, config: VerifyConfig, label: str = "") -> VerifyReport:
    """``||x||_BMO <= ||x||_BMO_p <= c p ||x||_BMO`` for every ``p`` in the config.

    The left side uses the seeded lower bound of ``BMO_p``, the right side the
    best lower bound; commutative instances use the exact oracle for both.
    Exponents are visited in increasing order, each seeded from the witnesses
    of the previous one with ``config.warm_restarts`` starts per pair.
    """
    rep = VerifyReport("jn")
    b = bmo(mart)
    prev, prev_value = None, None
    for (i, p) in sorted(enumerate(config.p_list), key=lambda ip: ip[1]):
        exact = _oracle_bmo_p(mart, p)
        witness = None
        if exact is not None:
            value = seeded = exact
        else:
            nr = bmo_p(
                mart,
                p,
                restarts=config.restarts if prev is None else config.warm_restarts,
                seed=sub_seed(config.seed, i),
                positive=config.positive_witness,
                max_it=config.max_it,
                c_upper=config.c_jn,
                warm_start=prev,
                rtol=config.ascent_rtol,
                prune=config.prune,
            )
            value, seeded, witness = nr.value, nr.details["seeded_value"], nr.witness
            prev = nr
        ratio = value / b if b > 0 else 0.0
        left = seeded >= b - config.left_tol
        right = value <= config.c_jn * p * b + 1e-12
        monotone = prev_value is None or value >= prev_value - 1e-5 * max(1.0, prev_value)
        prev_value = value
        rec = dict(
            sample=label,
            p=p,
            bmo=b,
            bmo_p=value,
            seeded=seeded,
            ratio=ratio,
            ratio_p=ratio / p,
            exact=exact is not None,
            left_pass=left,
            right_pass=right,
            monotone=monotone,
        )
        if witness is not None and config.keep_witnesses:
            rec["witness"] = dict(witness)
        rep.records.append(rec)
        if not (left and right):
            rep.flag("%s p=%g: left=%s right=%s" % (label, p, left, right), hard=True)
        if not monotone:
            rep.flag("%s p=%g: lower bound below the previous exponent" % (label, p))
    return rep


def recompute_ratio(mart: Martingale, record: dict) -> float:
    """Re-evaluate ``bmo_p / bmo`` of a ``check_jn`` record from its witness."""
    w, p = record["witness"], record["p"]
    dm = mart.dense()
    side = dm.adjoint() if w.get("side") == "row" else dm
    val = bmo_p_ratio(side, w["n"], w["m"], w["a"], p)
    return val / record["bmo"] if record["bmo"] > 0 else 0.0


class FitResult(NamedTuple):
    c_hat: float
    slope: Optional[float]
    passed: bool


def fit_constant(records: List[dict], slope_band: float = 0.15, key: str = "ratio") -> FitResult:
    """``c = max ratio / p`` and the log-log slope of the max ratio against ``p``."""
    records = [r for r in records if key in r and "p" in r]
    if len(records) == 0:
        raise EmptyStream("no records to fit")
    c_hat = max(r[key] / r["p"] for r in records)
    best = {}
    for r in records:
        best[r["p"]] = max(best.get(r["p"], 0.0), r[key])
    ps = sorted(p for p in best if best[p] > 0)
    slope = None
    if len(ps) >= 2:
        slope = float(stats.linregress(np.log(ps), np.log([best[p] for p in ps])).slope)
    passed = slope is None or slope <= 1.0 + slope_band
    return FitResult(float(c_hat), slope, passed)


##$#############################################################################
##^# BMO into L_p ##############################################################
def check_bmo_in_lp(mart: Martingale, config: VerifyConfig, label: str = "", with_cmo: bool = True) -> VerifyReport:
    """``||D^{(1-eta)/p} x D^{eta/p}||_p <= c p ||x||_BMO`` for every ``p`` and ``eta``;
    records ``||x||_{L_p^cMO} / ||x D^{1/p}||_p`` for ``p > 4``."""
    rep = VerifyReport("inclusion")
    filt, b = mart.filtration, bmo(mart)
    for (i, p) in enumerate(config.p_list):
        for eta in config.eta_list:
            v = float(filt.lp_norm(mart.x, p, eta))
            ok = v <= config.c_jn * p * b + 1e-12
            rep.records.append(
                dict(sample=label, p=p, eta=eta, lp=v, bmo=b, ratio=v / b if b > 0 else 0.0, passed=ok)
            )
            if not ok:
                rep.flag("%s p=%g eta=%g: lp norm exceeds c p bmo" % (label, p, eta), hard=True)
        if with_cmo and p > 4 and mart.filtration.dim <= 16:
            mo = lp_c_mo(mart, p, restarts=max(1, config.restarts // 2), seed=sub_seed(config.seed, i))
            lp1 = float(filt.lp_norm(mart.x, p, 1.0))
            r = mo.value / lp1 if lp1 > 0 else 0.0
            rep.records.append(
                dict(sample=label, p=p, cmo=mo.value, cmo_upper=mo.upper_bound, lp_col=lp1, cmo_ratio=r, c4_estimate=r ** (p / 4.0))
            )
    return rep


def check_inclusion_slack(inc: VerifyReport, c_hat: float) -> VerifyReport:
    """Fails ``inc`` when some ``||D^{(1-eta)/p} x D^{eta/p}||_p`` exceeds ``2 c_hat p ||x||_BMO``."""
    slack = 2.0 * c_hat
    over = [r for r in inc.records if "lp" in r and r["lp"] > slack * r["p"] * r["bmo"] + 1e-12]
    inc.constants["c_slack"] = slack
    if len(over) > 0:
        inc.flag("%d samples above 2 c_hat p bmo" % len(over), hard=True)
    return inc


##$#############################################################################
##^# change of state ###########################################################
def _shifted_filtration(filt: Filtration, n: int, state: State) -> Filtration:
    return validate_filtration(state, filt.levels[n:], check_cp=False)


def check_tail_bmo(mart: Martingale, n: int) -> VerifyReport:
    """``||x - x_{n-1}||_BMO`` relative to ``(N_{n+k})_k`` is at most ``||x||_BMO``."""
    rep = VerifyReport("tail_bmo")
    mart = mart.dense()
    filt = mart.filtration
    shifted = _shifted_filtration(filt, n, filt.state)
    tail = bmo(decompose(mart.x - mart.term(n - 1), shifted))
    full = bmo(mart)
    ok = tail <= full * (1 + 1e-9) + 1e-12
    rep.records.append(dict(n=n, tail_bmo=tail, bmo=full, passed=ok))
    if not ok:
        rep.flag("tail bmo exceeds bmo at n=%d" % n, hard=True)
    return rep


def check_change_of_state(
    mart: Martingale,
    n: int,
    a: Optional[Tensor],
    p: float,
    config: VerifyConfig,
    eps: float = 1e-8,
) -> VerifyReport:
    """``||(x - x_{n-1}) a||_p <= c p ||x||_BMO ||a||_p`` for ``a`` in ``L_p(N_n)``.

    Also rebuilds the filtration ``(N_{n+k})_k`` under the state with density
    ``a^p`` (made faithful by adding ``eps D``) and checks that its conditional
    expectations are the original ones. For ``p < 2`` the bound goes through
    ``a_1 = |a^*|^{1/2}`` at exponent ``2p``.
    """
    linalg.check_exponent(p)
    rep = VerifyReport("change_of_state")
    mart = mart.dense()
    filt = mart.filtration
    st = filt.state
    a = st.power(1.0 / p) if a is None else ctensor(a)
    b = a @ st.power(-1.0 / p)
    res = float(filt.level(n).residual(b))
    if res > 1e-8:
        raise BadWitness("multiplier is not in L_p(N_n)", level=n, residual=res)
    y = mart.x - mart.term(n - 1)
    bm = bmo(mart)
    a_norm = float(linalg.schatten_norm(a, p))
    lhs = float(linalg.schatten_norm(y @ a, p))
    rec = dict(n=n, p=p, lhs=lhs, a_norm=a_norm, bmo=bm)

    if p < 2:
        ap, pe = linalg.mat_power(linalg.op_abs(ct(a)), 0.5, check=False), 2.0 * p
        holder = float(linalg.schatten_norm(y @ ap, pe)) * float(linalg.schatten_norm(ap, pe))
        rec["holder_bound"] = holder
        rec["holder_pass"] = lhs <= holder * (1 + 1e-9) + 1e-12
    else:
        ap, pe = a, p
    rhs = config.c_jn * pe * bm * a_norm
    rec.update(rhs=rhs, passed=lhs <= rhs + 1e-12)

    # state phi_a with density |a_p^*|^{p_e}
    apos = linalg.op_abs(ct(ap))
    apos = apos / float(linalg.schatten_norm(apos, pe))
    Da = linalg.mat_power(apos, pe, check=False)
    Da = herm(Da + eps * st.density) / (1.0 + eps)
    try:
        new_state = State(Da / trace(Da).real)
        shifted = _shifted_filtration(filt, n, new_state)
        resid = max(
            float(fro(E - filt.cond_exps[k + n]) / max(1.0, float(fro(filt.cond_exps[k + n]))))
            for (k, E) in enumerate(shifted.cond_exps)
        )
        rec["structure_residual"] = resid
        rec["structure_pass"] = resid <= 1e-8
        # ||y||_{L_p(phi_a)} with the column embedding equals ||y a_p||_p / ||a_p||_p
        rec["change_of_measure"] = float(lp_norm(new_state, y, pe, 1.0))
        rec["change_of_measure_direct"] = float(linalg.schatten_norm(y @ apos, pe))
        rec["change_of_measure_pass"] = abs(rec["change_of_measure"] - rec["change_of_measure_direct"]) <= 1e-6 * max(
            1.0, rec["change_of_measure_direct"]
        )
        rec["tail_bmo"] = bmo(decompose(y, shifted))
        rec["tail_bmo_pass"] = rec["tail_bmo"] <= bm * (1 + 1e-9) + 1e-12
    except NcbmoError as e:
        rec["structure_pass"] = False
        rec["structure_error"] = e.code
    rep.records.append(rec)
    for key in ("passed", "holder_pass", "structure_pass", "change_of_measure_pass", "tail_bmo_pass"):
        if key in rec and not rec[key]:
            rep.flag("n=%d p=%g: %s failed" % (n, p, key), hard=True)
    return rep


def random_lp_multiplier(filt: Filtration, n: int, p: float, seed: int) -> Tensor:
    """Random ``a = b D^{1/p}`` with ``b`` in ``N_n``."""
    gen = make_generator(seed)
    alg = filt.level(n)
    b = alg.from_coords(randn_complex((alg.dim,), gen))
    return b @ filt.state.power(1.0 / p)


##$#############################################################################
##^# large deviations ##########################################################
class LargeDeviation(NamedTuple):
    f: Tensor
    tail: float
    passed: bool
    norm: float
    schedule: dict


def large_deviation(mart: Martingale, t: float, config: VerifyConfig) -> LargeDeviation:
    """Spectral witness ``f = 1_{[0, t]}(|x - x_0|)`` for the large-deviation bound.

    ``x`` is rescaled to ``bmo(x) <= 1`` first. ``||(x - x_0) f|| <= t`` holds by
    spectral calculus; ``phi(1 - f) < c_2 e^{-t c_1}`` is tested with the
    configured constants (``c_1`` defaults to ``config.c1_min``).
    """
    filt = mart.filtration
    b = bmo(mart)
    scale = 1.0 / b if b > 1.0 else 1.0
    y = scale * (mart.x - mart.xs[0])
    f = linalg.spectral_projection(linalg.op_abs(y), -math.inf, t)
    norm = float(filt.opnorm(y @ f).max())
    tail = max(float(filt.phi(filt.identity() - f).real), 0.0)
    c1 = config.c1 if config.c1 is not None else config.c1_min
    bound = config.c2 * math.exp(-t * c1)
    eps = math.exp(-t * c1)
    schedule = dict(c1=c1, c2=config.c2, eps=eps, p=4.0 * math.log(1.0 / eps), trivial=t * c1 < 1.0)
    return LargeDeviation(f, tail, tail < bound and norm <= t + 1e-9, norm, schedule)


def fit_tail_constants(points, cap: float = 10.0, c1_max: float = 50.0):
    """Largest ``c_1`` with ``max_t tail(t) e^{c_1 t} <= cap``, and the resulting ``c_2``.

    Args:
        points: ``(t, tail)`` pairs
    Returns:
        ``(c1, c2)``; ``c2`` is the smallest constant with ``tail <= c2 e^{-t c1}``
    """
    pts = [(float(t), float(tail)) for (t, tail) in points if tail > 0]
    if len(pts) == 0:
        return c1_max, 0.0

    def g(c1):
        return max(math.log(tail) + c1 * t for (t, tail) in pts) - math.log(cap)

    if g(0.0) > 0:
        return 0.0, max(tail for (_, tail) in pts)
    c1 = c1_max if g(c1_max) <= 0 else optimize.brentq(g, 0.0, c1_max, xtol=1e-12)
    return float(c1), max(tail * math.exp(c1 * t) for (t, tail) in pts)


def large_deviation_sweep(samples, config: VerifyConfig, hard: bool = True, prefix: str = "") -> VerifyReport:
    """Run ``large_deviation`` over ``(label, mart)`` samples and the ``t`` grid and fit ``(c_1, c_2)``,
    stored as ``prefix + "c1_hat"`` and ``prefix + "c2_hat"``.

    The witness norm bound is always a hard check; tail violations fail the
    report only when ``hard`` (the witness is one particular projection).
    """
    rep = VerifyReport("largedev")
    points = []
    for (label, mart) in _progress(samples, config, "largedev"):
        for t in config.t_list:
            ld = large_deviation(mart, t, config)
            points.append((t, ld.tail))
            rep.records.append(dict(sample=label, t=t, tail=ld.tail, norm=ld.norm, passed=ld.passed, **ld.schedule))
            if ld.norm > t + 1e-9:
                rep.flag("%s t=%g: witness norm %g exceeds t" % (label, t, ld.norm), hard=True)
    c1, c2 = fit_tail_constants(points, config.c2_cap)
    rep.constants.update({prefix + "c1_hat": c1, prefix + "c2_hat": c2})
    if config.c1 is None:
        ok = c2 <= config.c2_cap and c1 >= config.c1_min
        if not ok:
            rep.flag("fitted tail constants c1=%g c2=%g out of range" % (c1, c2), hard=hard)
    else:
        for r in rep.records:
            if not r["passed"]:
                rep.flag("%s t=%g: tail %g above the bound" % (r["sample"], r["t"], r["tail"]), hard=hard)
    return rep


def largedev_suite(classical, general, config: VerifyConfig) -> VerifyReport:
    """Hard sweep on tracial classical samples, reported sweep on the general ones;
    each fit keeps its own ``classical_`` or ``general_`` constants."""
    hard = large_deviation_sweep(classical, config, hard=True, prefix="classical_")
    soft = large_deviation_sweep(general, config, hard=False, prefix="general_")
    return hard.merge(soft)


##$#############################################################################
##^# L_exp #####################################################################
def _is_tracial(filt) -> bool:
    state = filt.state if isinstance(filt, Filtration) else filt.fiber_state
    return state.is_tracial()


def _tracial_singular_values(mart: Martingale) -> Tensor:
    if not _is_tracial(mart.filtration):
        raise NotTracial("the L_exp norm needs the normalized trace")
    return torch.linalg.svdvals(mart.x).reshape(-1)


def lexp_norm(mart: Martingale, lo: float = 1e-6, hi: float = 1e6) -> float:
    """``inf{lam > 0 : tau(e^{|x|/lam - 1}) <= 1}`` by bisection on ``log lam``."""
    s = _tracial_singular_values(mart)
    if float(s.max()) == 0.0:
        return 0.0

    def g(log_lam):
        return float(torch.logsumexp(s / math.exp(log_lam) - 1.0, 0)) - math.log(s.numel())

    if g(math.log(lo)) <= 0:
        return lo
    if g(math.log(hi)) > 0:
        return math.inf
    return math.exp(optimize.bisect(g, math.log(lo), math.log(hi), xtol=1e-14, maxiter=80))


def lexp_check(mart: Martingale, config: VerifyConfig, label: str = "") -> VerifyReport:
    rep = VerifyReport("lexp")
    val, b = lexp_norm(mart), bmo(mart)
    K = config.c_jn * math.e / (1.0 - 1.0 / math.e)
    rec = dict(sample=label, lexp=val, bmo=b, K=K, passed=val <= K * b + 1e-12)
    if mart.filtration.is_commutative() and val > 0:
        try:
            rec["exp_moment"] = classical_bmo_exponential(mart, val)
        except NotCommutative:
            pass
    rep.records.append(rec)
    if not rec["passed"]:
        rep.flag("%s: L_exp norm %g exceeds K bmo" % (label, val), hard=True)
    return rep


##$#############################################################################
##^# conditional expectation properties ########################################
def _random_element(filt, gen):
    return randn_complex(tuple(filt.element_shape), gen)


def check_kadison(filtration, n: int, samples: int = 200, seed: int = 0) -> VerifyReport:
    """``E_n(x)^* E_n(x) <= E_n(x^* x)`` on random ``x``."""
    rep = VerifyReport("kadison")
    gen = make_generator(sub_seed(seed, n))
    worst = math.inf
    for _ in range(samples):
        x = _random_element(filtration, gen)
        Ex = filtration.expect(n, x)
        M = herm(filtration.expect(n, ct(x) @ x) - ct(Ex) @ Ex)
        worst = min(worst, float(linalg.min_eig(M).min()))
    rep.records.append(dict(level=n, samples=samples, min_eig=worst, passed=worst >= -1e-9))
    if worst < -1e-9:
        rep.flag("level %d: Kadison gap %g" % (n, worst), hard=True)
    return rep


def check_stein(filtration, p_list=(2.0, 4.0), samples: int = 50, seed: int = 0, eta: float = 0.5) -> VerifyReport:
    """Ratios ``||Q z|| / ||z||`` of the Stein projection in the column and row norms.

    At ``p = 2`` (symmetric embedding) the projection is contractive.
    """
    rep = VerifyReport("stein")
    for (i, p) in enumerate(p_list):
        gen = make_generator(sub_seed(seed, i))
        worst = 0.0
        for _ in range(samples):
            zs = [filtration.embed(_random_element(filtration, gen), p, eta) for _ in range(filtration.nlevels)]
            Q = stein_projection(zs, filtration, p)
            for fn in (lp_l2c_norm, lp_l2r_norm):
                den = fn(zs, p, filtration)
                worst = max(worst, fn(Q, p, filtration) / den if den > 0 else 0.0)
        ok = p != 2.0 or worst <= 1.0 + 1e-9
        rep.records.append(dict(p=p, samples=samples, max_ratio=worst, passed=ok))
        if not ok:
            rep.flag("p=2 Stein ratio %g above 1" % worst, hard=True)
    return rep


def check_filtration_axioms(filtration, samples: int = 200, seed: int = 0, tol: float = 1e-9) -> VerifyReport:
    """Conditional-expectation axioms on random samples, one record per axiom."""
    rep = VerifyReport("axioms")
    filt = filtration.dense()
    st, N = filt.state, filt.dim
    gen = make_generator(seed)
    worst = {}

    def note(name, res, scale=1.0):
        worst[name] = max(worst.get(name, 0.0), float(res) / max(1.0, float(scale)))

    for (n, E) in enumerate(filt.cond_exps):
        note("completely_positive", max(0.0, -float(linalg.min_eig(choi_matrix(E)))))
    for _ in range(samples):
        n = int(torch.randint(filt.nlevels, (1,), generator=gen))
        m = int(torch.randint(filt.nlevels, (1,), generator=gen))
        alg = filt.level(n)
        x = _random_element(filt, gen)
        a, b = [alg.from_coords(randn_complex((alg.dim,), gen)) for _ in range(2)]
        Ex, sx = filt.expect(n, x), float(fro(x))
        note("unital", fro(filt.expect(n, filt.identity()) - filt.identity()))
        note("idempotent", fro(filt.expect(n, Ex) - Ex), sx)
        note("state", abs(complex(filt.phi(Ex) - filt.phi(x))), sx)
        note("defining", abs(complex(filt.phi(Ex @ b) - filt.phi(x @ b))), sx * float(fro(b)))
        note("module", fro(filt.expect(n, a @ x @ b) - a @ Ex @ b), sx * float(fro(a) * fro(b)))
        note("commuting_squares", fro(filt.expect(m, Ex) - filt.expect(min(n, m), x)), sx)
        Ey = herm(filt.expect(n, ct(x) @ x) - ct(Ex) @ Ex)
        note("kadison", max(0.0, -float(linalg.min_eig(Ey))), sx ** 2)
        for tt in (0.3, -1.7):
            note("modular", fro(filt.expect(n, modular_flow(st, x, tt)) - modular_flow(st, Ex, tt)), sx)
        for p in (1.0, 2.0, 4.0):
            for theta in (0.0, 0.5, 1.0):
                L, R = st.power((1.0 - theta) / p), st.power(theta / p)
                note("lp_extension", fro(filt.expect_lp(n, L @ x @ R, p) - L @ Ex @ R), sx)
    for (name, res) in sorted(worst.items()):
        ok = res <= tol
        rep.records.append(dict(axiom=name, dim=N, levels=filt.nlevels, max_residual=res, passed=ok))
        if not ok:
            rep.flag("axiom %s violated, residual %g" % (name, res), hard=True)
    return rep


##$#############################################################################
##^# column counterexample #####################################################
def counterexample_report(n_list=(2, 4, 8), p_list=(3.0, 4.0, 6.0), constant_signs: bool = False) -> VerifyReport:
    """``x = sum_k r_k (x) e_{1k}``: ``||x||_p = n^{1/2 - 1/p}`` while ``||x||_{BMO_c} = 1``.

    With ``constant_signs`` the table is only recorded; the closed forms are
    asserted for Rademacher signs.
    """
    rep = VerifyReport("counterexample")
    ratios = {}
    for n in n_list:
        filt, mart = rademacher_matrix_martingale(n, constant_signs=constant_signs)
        bc, br = bmo_c(mart), bmo_r(mart)
        for p in p_list:
            lp = float(filt.lp_norm(mart.x, p, 0.5))
            expected = n ** (0.5 - 1.0 / p)
            row = dict(n=n, p=p, lp_norm=lp, expected=expected, bmo_c=bc, bmo_r=br, ratio=lp / bc)
            if not constant_signs:
                row["passed"] = abs(lp - expected) <= 1e-8 * expected and abs(bc - 1.0) <= 1e-10
                if not row["passed"]:
                    rep.flag("n=%d p=%g: closed form mismatch" % (n, p), hard=True)
            rep.table.append(row)
            ratios.setdefault(p, []).append((n, lp / bc))
    if not constant_signs:
        for (p, seq) in ratios.items():
            seq = [r for (_, r) in sorted(seq)]
            diverging = all(r2 > r1 for (r1, r2) in zip(seq[:-1], seq[1:]))
            rep.records.append(dict(p=p, ratios=seq, diverging=diverging))
            if p > 2 and not diverging:
                rep.flag("p=%g: ratio not increasing in n" % p, hard=True)
    return rep


##$#############################################################################
##^# sup-norm remarks ##########################################################
HOLDER_TRIPLES = ((1.5, 3.0, 3.0), (2.0, 3.0, 6.0), (2.0, 4.0, 4.0), (3.0, 4.0, 12.0))


def _below(lower, bound):
    return lower <= bound * (1 + 1e-9) + 1e-12


def check_sup_norm_remarks(samples: int = 20, seed: int = 0, nterms: int = 3, dim: int = 3) -> VerifyReport:
    """Sup-norm inequalities on bracket values, for ``1/p = 1/q + 1/s`` and PSD ``a, b``:

    - ``sup_m ||sup_{n <= m} x_n||_p`` matches ``||sup_n x_n||_p``
    - ``||sup_n a^{1/2} x_n a^{1/2}||_p <= ||a||_s ||sup_n x_n||_q``
    - ``||sup_n a w_n a||_q <= sup_n ||w_n|| ||a||_{2q}^2``
    - ``||sup_n x_n^{1/2} b x_n^{1/2}||_p <= ||b||_inf ||sup_n x_n||_p``
    """
    rep = VerifyReport("sup_norm_remarks")

    def bracket(terms, q, s):
        return sup_norm_bracket(SupNormProblem(terms, q, restarts=1, seed=s, max_it=100))

    for s in range(samples):
        gen = make_generator(sub_seed(seed, s))
        (p, q, r) = HOLDER_TRIPLES[s % len(HOLDER_TRIPLES)]
        xs = [random_psd(dim, gen) for _ in range(nterms)]
        a = random_psd(dim, gen)
        b = random_psd(dim, gen)
        b = 0.9 * b / float(linalg.opnorm(b))

        full_p, full_q = bracket(xs, p, s), bracket(xs, q, s)
        prefix = [bracket(xs[: m + 1], p, s) for m in range(nterms - 1)] + [full_p]
        exhaustion = max(br.lower for br in prefix)

        ah = linalg.mat_power(a, 0.5)
        conj = bracket([herm(ah @ x @ ah) for x in xs], p, s)
        holder_bound = float(linalg.schatten_norm(a, r)) * full_q.upper

        fac = sup_norm_bracket(SupNormProblem([a @ w @ a for w in xs], q, factorization=(a, xs), restarts=1, seed=s, max_it=100))
        holder_inf = max(float(linalg.opnorm(w)) for w in xs) * float(linalg.schatten_norm(a, 2 * q)) ** 2

        roots = [linalg.mat_power(x, 0.5) for x in xs]
        inner = bracket([herm(h @ b @ h) for h in roots], p, s)
        contraction_bound = float(linalg.opnorm(b)) * full_p.upper

        rec = dict(
            sample=s,
            p=p,
            q=q,
            s=r,
            lower=full_p.lower,
            upper=full_p.upper,
            exhaustion=exhaustion,
            exhaustion_pass=_below(exhaustion, full_p.upper) and _below(full_p.lower, full_p.upper),
            holder_lower=conj.lower,
            holder_bound=holder_bound,
            holder_pass=_below(conj.lower, holder_bound) and _below(conj.lower, conj.upper),
            factorized_lower=fac.lower,
            factorized_bound=holder_inf,
            factorized_pass=_below(fac.lower, holder_inf) and _below(fac.lower, fac.upper),
            inner_lower=inner.lower,
            contraction_bound=contraction_bound,
            contraction_pass=_below(inner.lower, contraction_bound) and _below(inner.lower, inner.upper),
        )
        rec["passed"] = all(rec[k] for k in ("exhaustion_pass", "holder_pass", "factorized_pass", "contraction_pass"))
        rep.records.append(rec)
        if not rec["passed"]:
            rep.flag("sample %d: sup-norm bracket inconsistent" % s, hard=True)
    return rep


##$#############################################################################
##^# interval layer ############################################################
def check_covering(samples: int = 10000, seed: int = 0, den: int = 10 ** 6) -> VerifyReport:
    """``I <= J`` and ``|J| <= 6 |I|`` for ``J = covering_dyadic(I)`` on random rational ``I``."""
    rep = VerifyReport("covering")
    rng = np.random.default_rng(seed)
    bad, worst = 0, Fraction(0)
    for _ in range(samples):
        left = Fraction(int(rng.integers(0, den)), den)
        length = Fraction(int(rng.integers(1, den)), int(rng.integers(1, den)) * den)
        I = Interval(left, length)
        J = covering_dyadic(I)
        worst = max(worst, J.length / I.length)
        if not (J.contains(I) and J.length <= 6 * I.length):
            bad += 1
    rep.records.append(dict(samples=samples, violations=bad, max_inflation=float(worst)))
    if bad > 0:
        rep.flag("%d covering violations" % bad, hard=True)
    return rep


def random_nested_pairs(depth: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    ncells, pairs = 2 ** depth, []
    f = StepFunction(torch.zeros((ncells, 1, 1), dtype=CDTYPE))
    for _ in range(count):
        ja, jb = sorted(rng.choice(ncells + 1, 2, replace=False).tolist())
        ia = int(rng.integers(ja, jb))
        ib = int(rng.integers(ia + 1, jb + 1))
        pairs.append((f.interval(ia, ib), f.interval(ja, jb)))
    return pairs


def check_interval_layer(config: VerifyConfig, depth: int = 4, fiber_dim: int = 2, p: float = 4.0) -> VerifyReport:
    """Covering lemma, nested-interval comparison and the dyadic bridge identity."""
    rep = check_covering(config.covering_samples, config.seed)
    gen = make_generator(sub_seed(config.seed, depth, fiber_dim))
    f = StepFunction(randn_complex((2 ** depth, fiber_dim, fiber_dim), gen))
    pairs = random_nested_pairs(depth, config.interval_pairs, config.seed)
    records = interval_comparison_check(f, p, pairs, restarts=1, seed=config.seed, max_it=50)
    cmp_rep = VerifyReport("interval")
    nfail = sum(not r.witness_pass for r in records)
    nflag = sum(r.flagged for r in records)
    cmp_rep.records.append(dict(p=p, pairs=len(records), witness_failures=nfail, flagged=nflag))
    if nfail > 0:
        cmp_rep.flag("%d nested pairs violate the comparison" % nfail, hard=True)
    if nflag > 0:
        cmp_rep.flag("%d nested pairs flagged at the sup level" % nflag)
    lhs = interval_bmo_c(f, dyadic_only=True)
    rhs = bmo_c_centered(f.to_martingale()) ** 2
    ok = abs(lhs - rhs) <= 1e-8 * max(1.0, rhs)
    cmp_rep.records.append(dict(interval_bmo_c=lhs, bmo_c_centered_sq=rhs, passed=ok))
    if not ok:
        cmp_rep.flag("bridge identity off by %g" % abs(lhs - rhs), hard=True)
    return _merge_all("interval", [rep, cmp_rep])


##$#############################################################################
##^# norm axioms ###############################################################
def check_norm_axioms(samples, config: VerifyConfig, p: float = 4.0) -> VerifyReport:
    """Homogeneity and triangle inequality on ``(label, x, y)`` martingale pairs;
    ``lp_c_mo`` at ``p = inf`` equals ``bmo_c``."""
    rep = VerifyReport("norm_axioms")
    lam = 1.7 - 0.4j
    fns = dict(
        bmo=bmo,
        hp_c=lambda m: hp_c(m, p, config.eta),
        lp_norm=lambda m: float(m.filtration.lp_norm(m.x, p, config.eta)),
        lp_c_mo_inf=lambda m: lp_c_mo(m, math.inf).value,
    )
    worst = {}
    for (label, mx, my) in samples:
        s = decompose(mx.x + my.x, mx.filtration)
        for (name, fn) in fns.items():
            vx, vy = fn(mx), fn(my)
            hom = abs(fn(mx.scaled(lam)) - abs(lam) * vx) / max(1.0, abs(lam) * vx)
            tri = max(0.0, fn(s) - vx - vy) / max(1.0, vx + vy)
            worst[name] = max(worst.get(name, 0.0), hom, tri)
        gap = abs(lp_c_mo(mx, math.inf).value - bmo_c(mx))
        worst["lp_c_mo_inf_vs_bmo_c"] = max(worst.get("lp_c_mo_inf_vs_bmo_c", 0.0), gap)
    for (name, res) in sorted(worst.items()):
        tol = 1e-10 if name == "lp_c_mo_inf_vs_bmo_c" else 1e-8
        rep.records.append(dict(quantity=name, max_residual=res, passed=res <= tol))
        if res > tol:
            rep.flag("%s: norm axiom residual %g" % (name, res), hard=True)
    return rep


##$#############################################################################
##^# commutative oracle ########################################################
def check_oracle(samples, config: VerifyConfig, p_list=(2.0, 4.0, 8.0)) -> VerifyReport:
    """``bmo_p_c`` against the exact commutative value, and exact sup-norm brackets on diagonal data."""
    rep = VerifyReport("oracle")
    for (i, (label, mart)) in enumerate(_progress(samples, config, "oracle")):
        for (j, p) in enumerate(p_list):
            exact = classical_bmo_p_oracle(mart, p)
            nr = bmo_p_c(mart, p, restarts=4, seed=sub_seed(config.seed, i, j), max_it=50)
            err = abs(nr.value - exact) / max(exact, 1e-300)
            rep.records.append(dict(sample=label, p=p, oracle=exact, bmo_p_c=nr.value, rel_err=err, passed=err <= config.oracle_tol))
            if err > config.oracle_tol:
                rep.flag("%s p=%g: bmo_p_c off the oracle by %g" % (label, p, err), hard=True)
        gen = make_generator(sub_seed(config.seed, i))
        terms = [torch.diag_embed(torch.rand(4, generator=gen, dtype=torch.float64).to(CDTYPE)) for _ in range(3)]
        br = sup_norm_bracket(SupNormProblem(terms, 2.5, restarts=1, seed=i, max_it=50))
        gap = (br.upper - br.lower) / max(br.upper, 1e-300)
        rep.records.append(dict(sample=label, q=2.5, lower=br.lower, upper=br.upper, gap=gap, passed=gap <= config.oracle_tol))
        if gap > config.oracle_tol:
            rep.flag("%s: diagonal sup-norm gap %g" % (label, gap), hard=True)
    return rep


##$#############################################################################
##^# suite #####################################################################
def standard_filtrations():
    """Filtrations of dimension at most 16 used by the suites, keyed by name."""
    D_block = torch.block_diag(
        ctensor([[0.2, 0.05j, 0.0], [-0.05j, 0.15, 0.02], [0.0, 0.02, 0.1]]),
        ctensor([[0.25, 0.0, 0.03], [0.0, 0.12, 0.0], [0.03, 0.0, 0.18]]),
    )
    block_levels = [block_subalgebra([(1, 3), (1, 3)]), block_subalgebra([(3, 1), (3, 1)]), full_algebra(6)]
    return {
        "classical-dyadic": dyadic_classical_filtration(2, 1),
        "classical-weighted": classical_filtration(
            [float(i) for i in range(1, 9)], [[8], [4, 4], [2, 2, 2, 2], [1] * 8]
        ),
        "quantum-tensor": quantum_tensor_filtration((0.3, 0.7), [[0.6, 0.1 + 0.05j], [0.1 - 0.05j, 0.4]]),
        "mixed-dyadic": dyadic_classical_filtration(2, 2, State(ctensor([[0.35, 0.0], [0.0, 0.65]]))),
        "block-chain": validate_filtration(State(D_block / trace(D_block).real), block_levels),
    }


def tracial_filtrations():
    return {
        "tracial-dyadic": dyadic_classical_filtration(3, 1),
        "tracial-matrix-dyadic": dyadic_classical_filtration(2, 2),
        "tracial-block-chain": validate_filtration(
            State.tracial(6), [block_subalgebra([(1, 3), (1, 3)]), block_subalgebra([(3, 1), (3, 1)]), full_algebra(6)]
        ),
    }


def ensemble(filtrations: dict, size: int, seed: int, normalize: str = "bmo"):
    """``size`` random martingales cycling through ``filtrations``."""
    names = sorted(filtrations.keys())
    out = []
    for i in range(size):
        name = names[i % len(names)]
        mart = random_martingale(filtrations[name], sub_seed(seed, i), normalize=normalize)
        out.append(("%s/%d" % (name, i), mart))
    return out


def run_suite(config: VerifyConfig) -> dict:
    """Every property suite on the standard filtrations, keyed by suite name."""
    filts, tracial = standard_filtrations(), tracial_filtrations()
    reports = {}

    reports["counterexample"] = counterexample_report()

    reports["axioms"] = _merge_all(
        "axioms", [check_filtration_axioms(f, config.axiom_samples, sub_seed(config.seed, i)) for (i, f) in enumerate(filts.values())]
    )
    reports["kadison"] = _merge_all(
        "kadison", [check_kadison(f, n, 50, config.seed) for f in filts.values() for n in range(f.nlevels)]
    )
    reports["stein"] = _merge_all("stein", [check_stein(f, (2.0, 4.0), 20, config.seed) for f in filts.values()])

    atoms = classical_filtration([1.0 + 0.1 * i for i in range(16)], [[8, 8], [4] * 4, [1] * 16])
    reports["oracle"] = check_oracle(ensemble({"atoms16": atoms}, min(50, config.ensemble_size), config.seed), config)

    marts = ensemble(filts, config.ensemble_size, config.seed)
    jn = _merge_all("jn", _map(lambda s: check_jn(s[1], config, s[0]), marts, config, "jn"))
    fit = fit_constant([r for r in jn.records if "ratio" in r], config.slope_band)
    jn.constants.update(c_hat=fit.c_hat, slope=fit.slope if fit.slope is not None else 0.0)
    if not fit.passed:
        jn.flag("growth slope %g above 1 + %g" % (fit.slope, config.slope_band), hard=True)
    reports["jn"] = jn

    inc = _merge_all(
        "inclusion",
        _map(lambda s: check_bmo_in_lp(s[1][1], config, s[1][0], with_cmo=s[0] < 10), list(enumerate(marts)), config, "inclusion"),
    )
    reports["inclusion"] = check_inclusion_slack(inc, fit.c_hat)

    cos = []
    for (i, (label, m)) in enumerate(marts[: min(20, len(marts))]):
        if m.nlevels < 2:
            continue
        for p in (1.5, 3.0):
            a = random_lp_multiplier(m.filtration, 1, p, sub_seed(config.seed, i))
            cos.append(check_change_of_state(m, 1, a, p, config))
        cos.append(check_tail_bmo(m, 1))
    reports["change_of_state"] = _merge_all("change_of_state", cos)

    tr = ensemble(tracial, config.ensemble_size, config.seed)
    classical_tr = [(lb, m) for (lb, m) in tr if m.filtration.is_commutative()]
    reports["largedev"] = largedev_suite(classical_tr, marts, config)
    reports["lexp"] = _merge_all("lexp", [lexp_check(m, config, label) for (label, m) in tr])

    reports["interval"] = check_interval_layer(config)
    others = ensemble(filts, min(100, config.ensemble_size), sub_seed(config.seed, 1))
    pairs = [(lx, mx, my) for ((lx, mx), (_, my)) in zip(marts, others)]
    reports["norm_axioms"] = check_norm_axioms(pairs[:100], config)
    reports["sup_norm_remarks"] = check_sup_norm_remarks(20, config.seed)
    for (name, rep) in reports.items():
        rep.name = name
    return reports


##$#############################################################################
