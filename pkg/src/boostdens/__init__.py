"""Boosted density estimation with classifier weak learners."""

from .boost import BoostTrace, MetricsConfig, StepPolicy, run_adabode
from .dist import BoostedDensity, DiagonalGaussian, GaussianMixture, mixture_random, mixture_ring, push_round
from .learner import MlpClassifier, TrainConfig, train_classifier
from .mcmc import MhConfig, rw_metropolis

__version__ = "0.1.0"
