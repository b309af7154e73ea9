"""Python bindings for the lpiopt C++ core."""

from ._lpiopt import (
    __version__,
    det_identity_gap,
    interpolation_weights,
    lambda_log,
    legendre,
    multi_index_set,
    optimize,
    oracle_bound,
    rate_fit,
    scaling_table_csv,
    script_b_matrix,
    theory_schedule,
    u_vector,
)

__all__ = [
    "__version__",
    "det_identity_gap",
    "interpolation_weights",
    "lambda_log",
    "legendre",
    "multi_index_set",
    "optimize",
    "oracle_bound",
    "rate_fit",
    "scaling_table_csv",
    "script_b_matrix",
    "theory_schedule",
    "u_vector",
]
