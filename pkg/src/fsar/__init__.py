"""Factor-augmented spatial autoregression.

Componentwise SAR maximum likelihood, latent-factor recovery by diversified
projections, SCAD+BIC covariate selection, factor-augmented refits with
sandwich standard errors, and a Monte-Carlo experiment harness.
"""

from . import (cmle, dgp, factors, fmle, networks, optim, pipeline, rng, scad,
               spatial)

__all__ = ["cmle", "dgp", "factors", "fmle", "networks", "optim", "pipeline",
           "rng", "scad", "spatial"]

__version__ = "0.1.0"
