"""Distance between clean inputs and their noised-then-denoised versions."""
from dataclasses import dataclass, field

import numpy as np

from .diffusion import select_tstar, single_shot_denoise
from .numerics.rng import Stream, context_id, gaussian_rows


@dataclass
class SigmaBlock:
    sigma: float
    t_star: int
    l2_delta: np.ndarray  # ||delta||_2 per sample: the denoiser-free distance
    l2_denoised: np.ndarray  # ||x - x_{0|t*}||_2 per sample

    @property
    def count(self):
        return len(self.l2_denoised)

    def summary(self):
        return {
            "sigma": self.sigma,
            "t_star": self.t_star,
            "count": self.count,
            "mean_l2_denoised": float(self.l2_denoised.mean()),
            "std_l2_denoised": float(self.l2_denoised.std()),
            "mean_l2_delta": float(self.l2_delta.mean()),
            "std_l2_delta": float(self.l2_delta.std()),
        }


@dataclass
class ShiftReport:
    blocks: list = field(default_factory=list)
    indices: np.ndarray = None

    def means(self):
        return [float(b.l2_denoised.mean()) for b in self.blocks]


def shift_study(dataset, denoiser, schedule, sigmas, n_samples, seed=0, indices=None):
    """Per sigma: perturb each sample, denoise at ``t*`` and record both distances.

    Uses the certification-path noising ``sqrt(ab) (x + delta)``. Sample ``k``
    draws from its own stream, so rows match across sigmas.
    """
    if n_samples > len(dataset):
        raise ValueError(f"asked for {n_samples} samples from a dataset of {len(dataset)}")
    ids = np.arange(n_samples) if indices is None else np.asarray(indices)[:n_samples]
    x = dataset.inputs[ids]
    report = ShiftReport(indices=ids)
    for sigma in sigmas:
        t_star = select_tstar(sigma, schedule)
        a, _ = schedule.coefficients(t_star)
        delta = sigma * gaussian_rows(seed, context_id(Stream.SHIFT), ids, dataset.dim)
        x0 = single_shot_denoise(a * (x + delta), t_star, denoiser, schedule)
        report.blocks.append(SigmaBlock(
            float(sigma), t_star,
            np.linalg.norm(delta, axis=1),
            np.linalg.norm(x - x0, axis=1),
        ))
    return report
