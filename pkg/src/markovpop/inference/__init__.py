"""Shared statistical machinery: Gaussian algebra, priors, optimizers, samplers."""
from ..linalg import cholesky_jitter, mvn_condition, mvn_logpdf
from .fitting import FitResult, fit_det_model, fit_jgdla, sigma_mle
from .likelihoods import BinomialObservation, det_model_loglik, mc_binomial_loglik
from .mcmc import MHConfig, PosteriorChain, metropolis
from .optimize import NelderMeadConfig, OptimizeResult, nelder_mead, numerical_hessian
from .priors import Prior
