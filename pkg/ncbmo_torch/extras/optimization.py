##^# library imports and utils #################################################
import math
from typing import Callable, NamedTuple, List

import torch
from torch import Tensor
from tqdm import tqdm

from ..differentiation import grad
from ..errors import OptimizerDiverged
from ..utils import TablePrinter

##$#############################################################################
##^# projected gradient ascent #################################################
class AscentResult(NamedTuple):
    x: Tensor
    value: float
    iterations: int
    converged: bool
    fallbacks: int


def _finite(v):
    return math.isfinite(float(v))


def maximize_ascent(
    f_fn: Callable,
    x0: Tensor,
    project_fn: Callable = None,
    verbose: bool = False,
    verbose_prefix: str = "",
    max_it: int = 300,
    step0: float = 1e-1,
    armijo: float = 1e-4,
    shrink: float = 0.5,
    min_step: float = 1e-14,
    rtol: float = 1e-9,
    window: int = 20,
    gap_fn: Callable = None,
    callback_fn: Callable = None,
    use_writer: bool = False,
    use_tqdm: bool = False,
    full_output: bool = False,
):
    """Maximize ``f_fn`` by normalized (projected) gradient ascent with
    Armijo backtracking along the projection arc.

    Args:
        f_fn: scalar objective of a real tensor
        x0: starting point
        project_fn: map onto the feasible set, applied after every step
        verbose: whether to print output
        verbose_prefix: prefix to append to verbose output, e.g. indentation
        max_it: maximum number of iterates
        step0: initial step length
        armijo: sufficient increase constant
        shrink: backtracking factor
        min_step: step length below which the iterate counts as stationary
        rtol: relative improvement over ``window`` iterates treated as converged
        window: see ``rtol``
        gap_fn: spectral gap of the iterate, see ``differentiation.grad``
        callback_fn: callback function of the form ``cb_fn(x)``
        use_writer: whether to use tensorflow's Summary Writer (via PyTorch)
        use_tqdm: whether to use tqdm (to estimate total runtime)
        full_output: whether to output the objective history
    Returns:
        ``AscentResult`` or ``(AscentResult, history)`` if ``full_output`` is ``True``
    """
    project_fn = project_fn if project_fn is not None else (lambda z: z)
    x = project_fn(x0.detach().clone())
    f, g, fb = grad(f_fn, x, gap_fn=gap_fn)
    if not _finite(f):
        raise OptimizerDiverged("objective is not finite at the starting point")
    fallbacks, step, hist, converged, it = int(fb), step0, [float(f)], False, 0
    tp = TablePrinter(
        ["it", "f", "||g||_2", "step"],
        ["%05d", "%9.4e", "%9.4e", "%9.4e"],
        prefix=verbose_prefix,
        use_writer=use_writer,
    )
    print_fn = print if not use_tqdm else tqdm.write
    if verbose:
        print_fn(tp.make_header())
    it_rng = range(max_it) if not use_tqdm else tqdm(range(max_it))
    for it in it_rng:
        g_norm = float(torch.norm(g))
        if g_norm == 0.0:
            converged = True
            break
        d = g / g_norm
        accepted = False
        with torch.no_grad():
            while step > min_step:
                x_new = project_fn(x + step * d)
                f_new = f_fn(x_new)
                if _finite(f_new) and f_new >= f + armijo * torch.sum(g * (x_new - x)):
                    accepted = True
                    break
                step *= shrink
        if not accepted:
            converged = True
            break
        x = x_new
        f, g, fb = grad(f_fn, x, gap_fn=gap_fn)
        if not _finite(f):
            raise OptimizerDiverged("objective diverged", iteration=it)
        fallbacks += int(fb)
        hist.append(float(f))
        step = min(2.0 * step, 1e2 * step0)
        if callback_fn is not None:
            callback_fn(x)
        if verbose:
            print_fn(tp.make_values([it, float(f), g_norm, step]))
        if len(hist) > window:
            if hist[-1] - hist[-1 - window] <= rtol * max(1.0, abs(hist[-1])):
                converged = True
                break
    if verbose:
        print_fn(tp.make_footer())
    tp.close()
    ret = AscentResult(x.detach(), float(f), it + 1, converged, fallbacks)
    return (ret, hist) if full_output else ret


##$#############################################################################
##^# L-BFGS ####################################################################
def maximize_lbfgs(
    f_fn: Callable,
    x0: Tensor,
    project_fn: Callable = None,
    verbose: bool = False,
    verbose_prefix: str = "",
    lr: float = 1e0,
    max_it: int = 50,
    use_writer: bool = False,
):
    """Polish a maximizer of ``f_fn`` with L-BFGS (strong Wolfe line search).
    The projection is only applied to the final iterate, so it must leave the
    objective unchanged (e.g. normalization of a scale-invariant ratio).

    Returns:
        ``AscentResult``; the starting point if L-BFGS produces non-finite values
    """
    project_fn = project_fn if project_fn is not None else (lambda z: z)
    x = x0.detach().clone().requires_grad_(True)
    with torch.no_grad():
        f0 = float(f_fn(x0))
    opt = torch.optim.LBFGS([x], lr=lr, line_search_fn="strong_wolfe")

    def closure():
        opt.zero_grad()
        l = -f_fn(x)
        l.backward()
        return l

    tp = TablePrinter(
        ["it", "imprv", "f"], ["%05d", "%9.4e", "%9.4e"], prefix=verbose_prefix, use_writer=use_writer
    )
    if verbose:
        tqdm.write(tp.make_header())
    it = 0
    with torch.enable_grad():
        for it in range(max_it):
            x_prev = x.detach().clone()
            l = opt.step(closure)
            if not (_finite(l) and bool(torch.all(torch.isfinite(x)))):
                return AscentResult(project_fn(x0.detach()), f0, it + 1, False, 0)
            imprv = float(torch.norm(x.detach() - x_prev))
            if verbose:
                tqdm.write(tp.make_values([it, imprv, -float(l)]))
            if imprv < 1e-9:
                break
    if verbose:
        tqdm.write(tp.make_footer())
    tp.close()
    x = project_fn(x.detach())
    with torch.no_grad():
        f = float(f_fn(x))
    if not (math.isfinite(f) and f >= f0):
        return AscentResult(project_fn(x0.detach()), f0, it + 1, False, 0)
    return AscentResult(x, f, it + 1, True, 0)


##$#############################################################################
##^# multistart ################################################################
def multistart(f_fn: Callable, seeds: List[Tensor], polish: bool = False, **kw):
    """Run ``maximize_ascent`` from every seed and return ``(best, results)``."""
    results = []
    for x0 in seeds:
        res = maximize_ascent(f_fn, x0, **kw)
        if polish:
            pol = maximize_lbfgs(f_fn, res.x, project_fn=kw.get("project_fn", None))
            if pol.value > res.value:
                res = res._replace(x=pol.x, value=pol.value)
        results.append(res)
    best = max(range(len(results)), key=lambda i: (results[i].value, -i))
    return results[best], results


##$#############################################################################
