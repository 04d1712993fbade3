"""Python surface for the data-mixture optimizer core.

Everything here is a thin re-export of the compiled module; the C++ library
owns all the numerics and the run/replay file formats.
"""

from ._core import (
    Domain,
    Evaluator,
    Manifest,
    MixingRatio,
    MixoptError,
    Surrogate,
    TruncExpParams,
    average_regret_bound,
    bound_constant,
    estimate,
    normalize_weights,
    order_stat_cdf,
    order_stat_pdf,
    order_stat_quantile,
    propose_ratio,
    run,
    sample_order_stat,
    validate,
)

__all__ = [
    "Domain",
    "Evaluator",
    "Manifest",
    "MixingRatio",
    "MixoptError",
    "Surrogate",
    "TruncExpParams",
    "average_regret_bound",
    "bound_constant",
    "estimate",
    "normalize_weights",
    "order_stat_cdf",
    "order_stat_pdf",
    "order_stat_quantile",
    "propose_ratio",
    "run",
    "sample_order_stat",
    "validate",
]
