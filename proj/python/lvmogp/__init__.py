"""Latent variable multiple output Gaussian processes.

Thin wrapper over the C++ extension; JSON configs and metrics are exchanged
as Python dicts here and as text underneath.
"""

import json as _json

from ._lvmogp import (  # noqa: F401
    BaselineModel,
    BoundValue,
    GridObservations,
    InvalidArgument,
    KernelParams,
    LatentPosterior,
    LvmogpModel,
    NumericalError,
    ParseError,
    PsiStatistics,
    RaggedObservations,
    TabularDataset,
    TestSet,
    bound_efficient,
    bound_missing,
    bound_reference,
    chol_solve,
    evaluate_bound,
    fit_baseline,
    gen_braking_toy,
    gen_synthetic_grid,
    gen_synthetic_missing,
    infer_new_condition,
    init_model,
    kernel_diag,
    kernel_matrix,
    kron_matvec,
    load_generic_csv,
    predict,
    predict_baseline,
    predict_given_latents,
    predict_with_latent,
    psi_stats,
)
from . import _lvmogp

__version__ = "0.1.0"


def fit(model, data, config=None):
    """Optimize the bound; returns (model, trace). config: dict of training options."""
    return _lvmogp.fit(model, data, _json.dumps(config or {}))


def train_config_defaults():
    return _json.loads(_lvmogp.train_config_defaults())


def run_experiment(name, config=None):
    """Run a named experiment; returns the metrics as a dict."""
    return _json.loads(_lvmogp.run_experiment(name, _json.dumps(config or {})))
