"""Hierarchical Bayesian spatiotemporal CAR models for areal count data.

Thin wrapper over the compiled core. The heavy lifting (ingest, NUTS
sampling, posterior summaries) lives in the C++ extension `_stcar`.
"""

from ._stcar import (
    DataError,
    Dataset,
    PosteriorDraws,
    fit,
    hpdi,
    ingest,
    prob_greater,
    simulate,
    summarize,
)

__all__ = [
    "DataError",
    "Dataset",
    "PosteriorDraws",
    "fit",
    "hpdi",
    "ingest",
    "prob_greater",
    "simulate",
    "summarize",
]
