"""The desk-scale synthetic setup used by the CLI defaults and the acceptance suite.

Everything here is deterministic in ``seed``, so the shipped denoiser is
simply the one :func:`desk_denoiser` trains.
"""
from .classifier import Regime, TrainConfig, train_classifier
from .datasets import gen_synthetic
from .diffusion import build_schedule, train_denoiser

DESK_DATA = dict(num_classes=8, side=12, contrast=0.2, jitter=0.1)
DESK_DENOISER = dict(hidden=(256, 256), epochs=30, batch=64, lr=1e-3)
DESK_CLASSIFIER = dict(epochs=30, finetune_epochs=20, batch=64, lr=1e-3)


def desk_data(seed=0, n_train_per_class=100, n_test_per_class=25):
    train = gen_synthetic(n_train_per_class, seed=2 * seed + 1, **DESK_DATA)
    test = gen_synthetic(n_test_per_class, seed=2 * seed + 2, **DESK_DATA)
    return train, test


def desk_denoiser(train, seed=0):
    schedule = build_schedule()
    return train_denoiser(train, schedule, seed=seed, **DESK_DENOISER)


def desk_classifiers(train, denoiser, sigma=0.5, seed=0, regimes=tuple(Regime), **attack):
    """CLEAN from scratch; GAUSS_AUG from scratch; NTD_AUG / ADV_EPS fine-tuned from CLEAN."""
    out = {}
    clean = train_classifier(train, TrainConfig(Regime.CLEAN, epochs=DESK_CLASSIFIER["epochs"], seed=seed))
    out[Regime.CLEAN] = clean
    for regime in regimes:
        if regime == Regime.CLEAN:
            continue
        scratch = regime == Regime.GAUSS_AUG
        cfg = TrainConfig(regime, sigma=sigma,
                          epochs=DESK_CLASSIFIER["epochs" if scratch else "finetune_epochs"],
                          batch=DESK_CLASSIFIER["batch"], lr=DESK_CLASSIFIER["lr"], seed=seed, **attack)
        out[regime] = train_classifier(train, cfg, denoiser, denoiser.schedule, init=None if scratch else clean)
    return out
