"""Distributed selective inference for sparse GLMs.

K local nodes select predictors with a weighted lasso, a central node
aggregates the selected model, and low-dimensional summaries are exchanged to
compute selection-corrected estimates, p-values, and confidence intervals.
"""

from distsi._core import (
    DistsiError,
    aggregate_pvalues,
    baseline_infer,
    check_kkt,
    dor,
    family_eval,
    fit_glm,
    multisplit_pvalues,
    run_protocol,
    solve_weighted_lasso,
)

__all__ = [
    "DistsiError",
    "aggregate_pvalues",
    "baseline_infer",
    "check_kkt",
    "dor",
    "family_eval",
    "fit_glm",
    "multisplit_pvalues",
    "run_protocol",
    "solve_weighted_lasso",
]
