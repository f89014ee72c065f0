"""Covariance neural networks for brain-age-gap estimation.

Submodules:
    linalg    symmetric eigendecomposition, least squares, covariance
    vnn       polynomial covariance filters and the filter-bank model
    training  manual backprop, Adam, splits, training/evaluation
    pipeline  bias-corrected delta-age, regional and spectral statistics
    stats     two-group ANOVA, F tail probabilities, Pearson, MAE
    synth     seeded synthetic cohorts with known ground truth
    io        cohort CSV, model persistence, report export
    figures   matplotlib rendering of exported reports
    cli       command-line entry point

Kept import-light on purpose: pull in the submodules you need.
"""

__version__ = "0.1.0"
