"""Attention-weighted SGD core operations (thin wrapper over the C++ module)."""

import json as _json

from ._absgd import (  # noqa: F401
    AbsgdIoError,
    AbsgdNumericError,
    AbsgdValidationError,
    batch_g_tilde,
    batch_weights,
    f_lambda,
    f_minmax,
    kl_to_uniform,
    log_sum_exp,
    lt_counts,
    p_star,
    run_experiment_json,
    softmax,
    st_counts,
    update_normalizer,
)


def run_experiment(config, seed):
    """Run one experiment from a config dict; returns the run record as a dict."""
    return _json.loads(run_experiment_json(_json.dumps(config), seed))
