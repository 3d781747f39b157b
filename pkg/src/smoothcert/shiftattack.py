"""Search for the noise draw whose single-shot denoising most confuses a classifier.

Sign-gradient ascent on ``eps`` through noising, the denoiser network and the
classifier, kept inside an l-inf box of radius ``r_adv`` around the initial
draw.
"""
from dataclasses import dataclass

import numpy as np

from .classifier import UNBOUNDED, cross_entropy, noised_denoised
from .diffusion import denoise_vjp, select_tstar
from .numerics.nets import net_backward, net_forward
from .numerics.rng import Rng, Stream, context_id


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackParams:
    sigma: float
    eta: float = 0.1
    M: int = 1
    r_adv: float = UNBOUNDED
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0 or self.eta < 0 or self.M < 1 or not self.r_adv > 0:
            raise ValueError("need sigma > 0, eta >= 0, M >= 1, r_adv > 0")


def loss_and_eps_grad(x, y, eps, t, classifier, denoiser, schedule):
    """Per-row cross-entropy of ``f(denoise(noise(x, eps)))`` and its gradient in ``eps``."""
    a, s = schedule.coefficients(t)
    x0, pullback = denoise_vjp(a * x + s * eps, t, denoiser, schedule)
    logits, tape = net_forward(classifier.net, x0)
    losses, cot = cross_entropy(logits, y)
    _, g_x0 = net_backward(classifier.net, tape, cot)
    return losses, s * pullback(g_x0)


def extreme_shift_batch(x, y, classifier, denoiser, schedule, params, eps0, t_star=None):
    """Batched search: rows of ``x`` are attacked independently.

    Returns ``(x_adv, eps_final, loss_trace)`` with ``loss_trace`` of shape
    ``(M + 1, B)``: the loss at ``eps_0`` and after each step.
    """
    if t_star is None:
        t_star = select_tstar(params.sigma, schedule)
    y = np.asarray(y, dtype=np.int64)
    eps = eps0
    trace = []
    for m in range(1, params.M + 1):
        losses, grad = loss_and_eps_grad(x, y, eps, t_star, classifier, denoiser, schedule)
        if not np.isfinite(losses).all():
            raise AttackError(f"non-finite loss at attack step {m}")
        trace.append(losses)
        eps = eps + params.eta * np.sign(grad)
        if params.r_adv != UNBOUNDED:
            eps = eps0 + np.clip(eps - eps0, -params.r_adv, params.r_adv)
    x_adv = noised_denoised(x, eps, t_star, denoiser, schedule)
    final, _ = cross_entropy(classifier.logits(x_adv), y)
    if not np.isfinite(final).all():
        raise AttackError(f"non-finite loss after attack step {params.M}")
    trace.append(final)
    return x_adv, eps, np.stack(trace)


def find_extreme_shift(x, y, classifier, denoiser, schedule, params, eps0=None):
    """Run the search for one sample; ``eps_0`` is drawn from ``params.seed`` unless given."""
    x = np.asarray(x, dtype=np.float64)
    if eps0 is None:
        eps0 = Rng(params.seed, context_id(Stream.ATTACK)).gaussian(x.shape)
    x_adv, eps, trace = extreme_shift_batch(x[None, :], [y], classifier, denoiser, schedule, params,
                                            np.asarray(eps0, dtype=np.float64)[None, :])
    return x_adv[0], eps[0], trace[:, 0]
