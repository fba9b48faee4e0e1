"""Python surface of the lab library.

Everything is implemented in the compiled extension; this package only
re-exports it under a stable name.
"""

from ._core import (  # noqa: F401
    cramer_rao,
    design_error,
    exact_fisher,
    expected_bayes_velocity_curve,
    greedy_floor,
    lqr_compare,
    mle_fit,
    ngram_series,
    optimal_error,
    value_iteration,
)

__all__ = [
    "cramer_rao",
    "design_error",
    "exact_fisher",
    "expected_bayes_velocity_curve",
    "greedy_floor",
    "lqr_compare",
    "mle_fit",
    "ngram_series",
    "optimal_error",
    "value_iteration",
]
