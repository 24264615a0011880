##^# library imports ###########################################################
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

import torch
from torch import Tensor

from . import linalg
from .algebra import State
from .errors import NotNested, ParseError, IoError
from .extras.optimization import maximize_ascent
from .martingale import compressed_dyadic_filtration, decompose
from .norms import NormReport
from .utils import CDTYPE, ctensor, ct, herm, eye
from .utils import make_generator, sub_seed

##$#############################################################################
##^# exact intervals ###########################################################
@dataclass(frozen=True)
class Interval:
    left: Fraction
    length: Fraction

    def __post_init__(self):
        object.__setattr__(self, "left", Fraction(self.left))
        object.__setattr__(self, "length", Fraction(self.length))
        if self.length <= 0:
            raise ValueError("interval length must be positive")

    @property
    def right(self):
        return self.left + self.length

    def contains(self, other) -> bool:
        return self.left <= other.left and other.right <= self.right

    @classmethod
    def from_endpoints(cls, a, b):
        a, b = Fraction(a), Fraction(b)
        return cls(a, b - a)

    def __str__(self):
        return "[%s, %s]" % (self.left, self.right)


def _pow2(n: int) -> Fraction:
    return Fraction(1, 2 ** n) if n >= 0 else Fraction(2 ** (-n))


def _floor_log2(r: Fraction) -> int:
    n = r.numerator.bit_length() - r.denominator.bit_length()
    while _pow2(-n) > r:
        n -= 1
    while _pow2(-(n + 1)) <= r:
        n += 1
    return n


def covering_dyadic(I: Interval) -> Interval:
    """Smallest plain or shifted dyadic interval ``J`` with ``I <= J`` and ``|J| <= 6|I|``.

    The shifted grid at scale ``2^{-n}`` has offset ``1/(3 2^n)``; on equal
    lengths the plain grid wins.
    """
    n = _floor_log2(1 / I.length)
    while _pow2(n) <= 6 * I.length:
        h = _pow2(n)
        for offset in (Fraction(0), h / 3):
            k = math.floor((I.left - offset) / h)
            J = Interval(offset + k * h, h)
            if J.contains(I):
                return J
        n -= 1
    raise AssertionError("no covering interval found for %s" % I)


##$#############################################################################
##^# step functions ############################################################
@dataclass
class StepFunction:
    """Matrix-valued step function on the ``2^m`` dyadic cells of ``[0, 1]``."""

    values: Tensor

    def __post_init__(self):
        self.values = ctensor(self.values)
        ncells = self.values.shape[0]
        assert self.values.ndim == 3 and self.values.shape[1] == self.values.shape[2]
        assert ncells > 0 and ncells & (ncells - 1) == 0, "number of cells must be a power of 2"

    @property
    def ncells(self):
        return self.values.shape[0]

    @property
    def depth(self):
        return self.ncells.bit_length() - 1

    @property
    def fiber_dim(self):
        return self.values.shape[-1]

    def adjoint(self):
        return StepFunction(ct(self.values))

    def reflect(self):
        return StepFunction(self.values.flip(0))

    def to_martingale(self, fiber_state: Optional[State] = None):
        filt = compressed_dyadic_filtration(self.depth, self.fiber_dim, fiber_state)
        return decompose(self.values, filt)

    def cells(self, I: Interval) -> Tuple[int, int]:
        """Cell range ``[a, b)`` of a grid-aligned interval inside ``[0, 1]``."""
        a, b = I.left * self.ncells, I.right * self.ncells
        if a.denominator != 1 or b.denominator != 1 or a < 0 or b > self.ncells:
            raise ValueError("interval %s is not aligned to the grid of depth %d" % (I, self.depth))
        return int(a), int(b)

    def interval(self, a: int, b: int) -> Interval:
        return Interval(Fraction(a, self.ncells), Fraction(b - a, self.ncells))


def grid_intervals(depth: int, dyadic_only: bool = False):
    """Cell ranges ``(a, b)`` of all grid-aligned (or only dyadic) subintervals."""
    ncells = 2 ** depth
    if dyadic_only:
        pairs = [
            (g * 2 ** (depth - j), (g + 1) * 2 ** (depth - j))
            for j in range(depth + 1)
            for g in range(2 ** j)
        ]
    else:
        pairs = [(a, b) for a in range(ncells) for b in range(a + 1, ncells + 1)]
    a, b = zip(*pairs)
    return torch.tensor(a), torch.tensor(b)


def _deviations(f: StepFunction, a: Tensor, b: Tensor) -> Tensor:
    # avg_I (x - x_I)^* (x - x_I) = avg_I x^* x - x_I^* x_I, via prefix sums
    x = f.values
    z = torch.zeros((1,) + x.shape[1:], dtype=CDTYPE)
    S1 = torch.cat([z, torch.cumsum(x, 0)])
    S2 = torch.cat([z, torch.cumsum(ct(x) @ x, 0)])
    cnt = (b - a).to(torch.float64)[:, None, None]
    mean = (S1[b] - S1[a]) / cnt
    return herm((S2[b] - S2[a]) / cnt - ct(mean) @ mean)


def interval_bmo_c(f: StepFunction, dyadic_only: bool = False) -> float:
    """``sup_I ||avg_I (x - x_I)^* (x - x_I)||`` over grid intervals (no square root)."""
    a, b = grid_intervals(f.depth, dyadic_only)
    return max(float(linalg.max_eig(_deviations(f, a, b)).max()), 0.0)


def interval_bmo_c_sqrt(f: StepFunction, dyadic_only: bool = False) -> float:
    return interval_bmo_c(f, dyadic_only) ** 0.5


def interval_bmo(f: StepFunction, dyadic_only: bool = False) -> float:
    return max(interval_bmo_c(f, dyadic_only), interval_bmo_c(f.adjoint(), dyadic_only))


def interval_bmo_sqrt(f: StepFunction, dyadic_only: bool = False) -> float:
    return interval_bmo(f, dyadic_only) ** 0.5


def extended_bmo_p(f: StepFunction) -> float:
    """Multiplier mode with ``t``-dependent ``a``: ``sup_I max_{t in I} ||x(t) - x_I||``."""
    best = 0.0
    for (a, b) in zip(*grid_intervals(f.depth)):
        y = f.values[a:b] - f.values[a:b].mean(0)
        best = max(best, float(linalg.opnorm(y).max()))
    return best


##$#############################################################################
##^# L_p deviation over an interval ############################################
class _IntervalObjective:
    """``(avg_{t in I} ||(x(t) - x_I) a||_p^p)^{1/p} / ||a||_p`` with ``a = b D^{1/p}``."""

    def __init__(self, f: StepFunction, a: int, b: int, p: float, fiber_state: State):
        self.y = f.values[a:b] - f.values[a:b].mean(0)
        self.p, self.Dp = p, fiber_state.power(1.0 / p)
        self.k = f.fiber_dim

    def to_a(self, theta):
        return torch.view_as_complex(theta.contiguous()) @ self.Dp

    def ratio_at(self, a: Tensor):
        p = self.p
        num = torch.mean(linalg.schatten_norm(self.y @ a, p) ** p) ** (1.0 / p)
        return num / linalg.schatten_norm(a, p)

    def __call__(self, theta):
        return self.ratio_at(self.to_a(theta))

    def project(self, theta):
        s = float(linalg.schatten_norm(self.to_a(theta), self.p))
        return theta / s if s > 0 else theta


def _maximize_interval(obj: _IntervalObjective, restarts: int, seed: int, max_it: int):
    p, y = obj.p, obj.y
    if float(linalg.opnorm(y).max()) == 0.0:
        return 0.0, obj.Dp
    if obj.k == 1:
        return float(obj.ratio_at(obj.Dp)), obj.Dp
    lam, U = linalg.herm_eig(herm((ct(y) @ y).mean(0)))
    top = U[:, -1:] @ ct(U[:, -1:])
    if p == 2:
        # Hilbert-space case: top eigenvalue of the averaged square
        return float(lam[-1].clamp(min=0.0)) ** 0.5, top
    starts = [top, eye(obj.k)]
    starts = [torch.view_as_real(s.to(CDTYPE)).clone() for s in starts]
    gen = make_generator(seed)
    for _ in range(max(restarts - len(starts), 0)):
        starts.append(torch.randn((obj.k, obj.k, 2), generator=gen, dtype=torch.float64))
    best_val, best_a = -math.inf, None
    for th0 in starts:
        res = maximize_ascent(obj, th0, project_fn=obj.project, max_it=max_it)
        a = obj.to_a(res.x).detach()
        val = float(obj.ratio_at(a))
        if val > best_val:
            best_val, best_a = val, a
    return best_val, best_a


def interval_bmo_p_lower(
    f: StepFunction,
    p: float,
    fiber_state: Optional[State] = None,
    restarts: int = 4,
    seed: int = 0,
    max_it: int = 200,
    dyadic_only: bool = False,
) -> NormReport:
    """Lower bound for ``sup_I sup_a (avg_I ||(x(t) - x_I) a||_p^p)^{1/p}`` with
    constant multipliers ``a`` on the unit ``L_p`` sphere of the fiber."""
    linalg.check_exponent(p, 2.0)
    fs = State.tracial(f.fiber_dim) if fiber_state is None else fiber_state
    best_val, best_w = 0.0, None
    for (a, b) in zip(*grid_intervals(f.depth, dyadic_only)):
        a, b = int(a), int(b)
        obj = _IntervalObjective(f, a, b, p, fs)
        val, wa = _maximize_interval(obj, restarts, sub_seed(seed, a, b), max_it)
        if best_w is None or val > best_val:
            best_val, best_w = val, dict(interval=f.interval(a, b), a=wa)
    return NormReport("interval_bmo_p", best_val, witness=best_w, restarts=restarts)


##$#############################################################################
##^# comparison of nested intervals ############################################
@dataclass
class ComparisonRecord:
    inner: Interval
    outer: Interval
    factor: float
    inner_value: float
    outer_value: float
    outer_at_inner_witness: float
    witness_pass: bool
    flagged: bool

    def to_dict(self):
        return dict(
            inner=str(self.inner),
            outer=str(self.outer),
            factor=self.factor,
            inner_value=self.inner_value,
            outer_value=self.outer_value,
            outer_at_inner_witness=self.outer_at_inner_witness,
            witness_pass=self.witness_pass,
            flagged=self.flagged,
        )


def interval_comparison_check(
    f: StepFunction,
    p: float,
    pairs: List[Tuple[Interval, Interval]],
    fiber_state: Optional[State] = None,
    restarts: int = 4,
    seed: int = 0,
    max_it: int = 200,
    tol: float = 1e-5,
) -> List[ComparisonRecord]:
    """Check ``||x||_{p,I} <= 2 (|J|/|I|)^{1/p} ||x||_{p,J}`` on nested grid pairs.

    The inequality holds for every fixed multiplier, so it is checked exactly
    with the witness found on ``I``; the sup-level comparison of the two lower
    bounds is flagged when it fails by more than ``tol`` relative.
    """
    linalg.check_exponent(p, 2.0)
    fs = State.tracial(f.fiber_dim) if fiber_state is None else fiber_state
    records = []
    for (i, (I, J)) in enumerate(pairs):
        if not J.contains(I):
            raise NotNested("inner interval is not contained in the outer one", inner=str(I), outer=str(J))
        (ia, ib), (ja, jb) = f.cells(I), f.cells(J)
        factor = 2.0 * float(J.length / I.length) ** (1.0 / p)
        obj_I = _IntervalObjective(f, ia, ib, p, fs)
        obj_J = _IntervalObjective(f, ja, jb, p, fs)
        val_I, a_I = _maximize_interval(obj_I, restarts, sub_seed(seed, i, 0), max_it)
        val_J, _ = _maximize_interval(obj_J, restarts, sub_seed(seed, i, 1), max_it)
        lhs = float(obj_I.ratio_at(a_I))
        rhs = float(obj_J.ratio_at(a_I))
        witness_pass = lhs <= factor * rhs * (1 + 1e-9) + 1e-12
        flagged = val_I > factor * max(val_J, rhs) * (1 + tol) + 1e-12
        records.append(ComparisonRecord(I, J, factor, val_I, val_J, rhs, witness_pass, flagged))
    return records


##$#############################################################################
##^# file codec ################################################################
def read_step_function(path) -> StepFunction:
    """Parse ``depth <m> fiber <k>`` followed by ``2^m`` blocks of ``k`` rows."""
    try:
        with open(path, "r") as fp:
            lines = fp.readlines()
    except OSError as e:
        raise IoError(str(e), path=str(path))
    rows, header = [], None
    for (lineno, line) in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if len(line) == 0:
            continue
        toks = line.split()
        if header is None:
            if len(toks) != 4 or toks[0] != "depth" or toks[2] != "fiber":
                raise ParseError("expected header 'depth <m> fiber <k>'", path=path, line=lineno)
            try:
                header = (int(toks[1]), int(toks[3]))
            except ValueError:
                raise ParseError("depth and fiber must be integers", path=path, line=lineno)
            continue
        try:
            row = [complex(tok) for tok in toks]
        except ValueError:
            raise ParseError("malformed complex entry", path=path, line=lineno)
        if len(row) != header[1]:
            raise ParseError("row must have %d entries" % header[1], path=path, line=lineno)
        rows.append(row)
    if header is None:
        raise ParseError("missing header", path=path)
    m, k = header
    if len(rows) != 2 ** m * k:
        raise ParseError("expected %d rows, found %d" % (2 ** m * k, len(rows)), path=path)
    return StepFunction(torch.tensor(rows, dtype=CDTYPE).reshape(2 ** m, k, k))


def write_step_function(f: StepFunction, path):
    def fmt(z):
        return repr(complex(z)).strip("()")

    with open(path, "w") as fp:
        fp.write("depth %d fiber %d\n" % (f.depth, f.fiber_dim))
        for (c, block) in enumerate(f.values.tolist()):
            fp.write("# cell %d\n" % c)
            for row in block:
                fp.write(" ".join(fmt(z) for z in row) + "\n")


##$#############################################################################
