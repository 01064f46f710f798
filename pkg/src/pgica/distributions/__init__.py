from .families import (
    KINDS,
    ScoreBundle,
    SourceFamily,
    columns_for,
    log_density,
    sample_source,
    sample_sources,
    score,
    score_all,
    sech_cdf,
    sech_inverse_cdf,
)
from .polyagamma import (
    pg1_series_draws,
    pg_laplace_transform,
    pg_mean,
    pg_variance,
    sample_pg1,
)

__all__ = [
    "KINDS", "ScoreBundle", "SourceFamily", "columns_for", "log_density", "sample_source",
    "sample_sources", "score", "score_all", "sech_cdf", "sech_inverse_cdf", "pg1_series_draws",
    "pg_laplace_transform", "pg_mean", "pg_variance", "sample_pg1",
]
