"""Tensor-normal covariance learning with transformation-based MCMC.

Modules
-------
tensor
    Dense tensors, mode-n products, unfolding and vectorization.
covariance
    SQE kernels, the free 2x2 factor, Cholesky factors and whitening.
model
    Tensor-normal likelihood, priors and the training / prediction posteriors.
tmcmc
    The transformation-based MCMC sampler.
data
    File formats, ingestion and the synthetic benchmark generator.
diagnostics
    Traces, kernel density marginals, stationarity and symmetry reports.
"""
__version__ = "0.1.0"

from .covariance import FreeFactor2x2, SpdFactor, SqeParams, sigma3_from_factor, sqe_kernel, whiten
from .model import CovParams, PosteriorSpec, PriorBounds, TrainingSet, log_likelihood, log_posterior, mle_mean, sample_posterior
from .tensor import DenseTensor, frobenius_norm_sq, mode_n_product, unfold, vec
from .tmcmc import Chain, ChainRecord, TmcmcConfig, run_chain

__all__ = [
    "Chain",
    "ChainRecord",
    "CovParams",
    "DenseTensor",
    "FreeFactor2x2",
    "PosteriorSpec",
    "PriorBounds",
    "SpdFactor",
    "SqeParams",
    "TmcmcConfig",
    "TrainingSet",
    "frobenius_norm_sq",
    "log_likelihood",
    "log_posterior",
    "mle_mean",
    "mode_n_product",
    "run_chain",
    "sample_posterior",
    "sigma3_from_factor",
    "sqe_kernel",
    "unfold",
    "vec",
    "whiten",
]
