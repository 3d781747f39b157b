from .nets import (
    Activation,
    FeedForwardNet,
    FormatError,
    GradTape,
    Layer,
    ShapeError,
    TapeError,
    load_net,
    net_backward,
    net_forward,
    net_from_bytes,
    net_to_bytes,
    save_net,
)
from .optim import Adam, AdamState, adam_step
from .rng import Rng, Stream, context_id, gaussian_rows, permutation, rng_gaussian, uniform_rows
from .stats import (
    DomainError,
    binom_two_sided_pvalue,
    clopper_pearson_lower,
    std_normal_cdf,
    std_normal_quantile,
)

__all__ = [
    "Activation", "FeedForwardNet", "FormatError", "GradTape", "Layer", "ShapeError", "TapeError",
    "load_net", "net_backward", "net_forward", "net_from_bytes", "net_to_bytes", "save_net",
    "Adam", "AdamState", "adam_step",
    "Rng", "Stream", "context_id", "gaussian_rows", "permutation", "rng_gaussian", "uniform_rows",
    "DomainError", "binom_two_sided_pvalue", "clopper_pearson_lower", "std_normal_cdf", "std_normal_quantile",
]
