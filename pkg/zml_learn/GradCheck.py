"""
Finite-difference gradient checker for networks and losses.
"""

import torch

from zml_util import Util

zlog = Util.get_logger(module=__name__)

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-3


def analytic_gradients(net, loss_fn, batch):
    net.zero_grad()
    loss = loss_fn(net, batch)
    loss.backward()
    return [
        p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
        for p in net.parameters()
    ]


@torch.no_grad()
def numeric_gradients(net, loss_fn, batch, h=DEFAULT_STEP):
    gradients = []
    for parameter in net.parameters():
        flat = parameter.view(-1)
        gradient = torch.zeros_like(flat)
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + h
            upper = loss_fn(net, batch).item()
            flat[i] = original - h
            lower = loss_fn(net, batch).item()
            flat[i] = original
            gradient[i] = (upper - lower) / (2.0 * h)
        gradients.append(gradient.view_as(parameter))
    return gradients


def grad_check(net, loss_fn, batch, h=DEFAULT_STEP, gradients=None, floor=DEFAULT_FLOOR):
    """
    Largest parameter-wise relative error between analytic gradients (or the supplied
    `gradients`) and central differences. `loss_fn(net, batch)` returns a scalar tensor;
    the net should be in double precision. Errors are relative to max(|a|, |n|, floor).
    """
    if gradients is None:
        gradients = analytic_gradients(net, loss_fn, batch)
    numeric = numeric_gradients(net, loss_fn, batch, h)
    worst = 0.0
    for analytic, estimate in zip(gradients, numeric):
        scale = torch.clamp(torch.maximum(analytic.abs(), estimate.abs()), min=floor)
        error = ((analytic - estimate).abs() / scale).max().item()
        worst = max(worst, error)
    zlog.debug("Gradient check: max relative error {:.3e}".format(worst))
    return worst
