"""Counter-based random streams.

Every draw is a pure function of ``(seed, context, index, counter)``. Work
split across threads therefore sees the same numbers no matter how it is
scheduled.
"""
from dataclasses import dataclass, replace
from enum import IntEnum
import math

import numpy as np

from .. import kernels

_U64 = (1 << 64) - 1


class Stream(IntEnum):
    """Context ids that keep the toolkit's random consumers apart."""

    INIT = 1
    SYNTH = 2
    SHUFFLE = 3
    DENOISER_T = 4
    DENOISER_EPS = 5
    TRAIN_NOISE = 6
    ATTACK = 7
    CERT_GUESS = 8
    CERT_ESTIMATE = 9
    PREDICT = 10
    SHIFT = 11
    SELECT = 12
    DENOISER_SHUFFLE = 13


def context_id(kind, sub=0):
    """Pack a stream kind and a 32-bit sub-context (e.g. a sample index)."""
    return ((int(kind) & 0xFFFFFFFF) << 32) | (int(sub) & 0xFFFFFFFF)


@dataclass(frozen=True)
class Rng:
    """Coordinates of one random stream; draws start at ``counter``."""

    seed: int
    context: int = 0
    index: int = 0
    counter: int = 0

    def __post_init__(self):
        for name in ("seed", "context", "index", "counter"):
            object.__setattr__(self, name, int(getattr(self, name)) & _U64)

    def at(self, context=None, index=None, counter=0):
        return replace(
            self,
            context=self.context if context is None else context,
            index=self.index if index is None else index,
            counter=counter,
        )

    def gaussian(self, shape):
        return rng_gaussian(self, shape)

    def uniform(self, shape):
        shape = _as_shape(shape)
        size = math.prod(shape)
        row = kernels.uniform_rows(self.seed, self.context, [self.index], size, self.counter)
        return row.reshape(shape)


def _as_shape(shape):
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def rng_gaussian(rng, shape):
    """I.i.d. standard normals drawn from ``rng``'s counter stream."""
    shape = _as_shape(shape)
    size = math.prod(shape)
    row = kernels.gaussian_rows(rng.seed, rng.context, [rng.index], size, rng.counter)
    return row.reshape(shape)


def gaussian_rows(seed, context, indices, ncols):
    """One independent stream per entry of ``indices``, ``ncols`` normals each."""
    return kernels.gaussian_rows(int(seed) & _U64, int(context) & _U64, indices, ncols)


def uniform_rows(seed, context, indices, ncols):
    return kernels.uniform_rows(int(seed) & _U64, int(context) & _U64, indices, ncols)


def permutation(seed, context, n):
    """Deterministic permutation of ``range(n)`` keyed by uniforms."""
    keys = uniform_rows(seed, context, np.arange(n), 1)[:, 0]
    return np.argsort(keys, kind="stable")
