##^# library imports ###########################################################
from typing import Callable

import torch
from torch import Tensor

GAP_TOL = 1e-8

##$#############################################################################
##^# gradients #################################################################
def value_and_grad(f_fn: Callable, x: Tensor):
    """Value and reverse-mode gradient of a scalar function of a real tensor."""
    x = x.detach().clone().requires_grad_(True)
    with torch.enable_grad():
        f = f_fn(x)
        (g,) = torch.autograd.grad(f, x)
    return f.detach(), g.detach()


def central_difference_grad(f_fn: Callable, x: Tensor, h: float = 1e-6) -> Tensor:
    """Entrywise central differences, ``(f(x + h e_i) - f(x - h e_i)) / 2h``."""
    x = x.detach()
    g = torch.zeros_like(x).reshape(-1)
    with torch.no_grad():
        for i in range(g.numel()):
            e = torch.zeros_like(g)
            e[i] = h
            e = e.reshape(x.shape)
            g[i] = (f_fn(x + e) - f_fn(x - e)) / (2 * h)
    return g.reshape(x.shape)


def grad(f_fn: Callable, x: Tensor, gap_fn: Callable = None, gap_tol: float = GAP_TOL):
    """Autograd gradient with a central-difference fallback.

    The fallback is taken when the autograd gradient is not finite, or when
    ``gap_fn(x)`` (the spectral gap the objective differentiates through)
    is below ``gap_tol``.

    Returns:
        ``(f, g, used_fallback)``
    """
    f, g = value_and_grad(f_fn, x)
    near_degenerate = False
    if gap_fn is not None:
        with torch.no_grad():
            near_degenerate = float(gap_fn(x.detach())) < gap_tol
    if bool(torch.all(torch.isfinite(g))) and not near_degenerate:
        return f, g, False
    return f, central_difference_grad(f_fn, x), True

##$#############################################################################
