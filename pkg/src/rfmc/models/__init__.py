"""Target distributions and state spaces used by the experiments."""

from .toy import ToyTarget, Example2Target, example1, example3, example4
from .ising import IsingModel
from .bayes import BinomialPosterior, load_scores
from .pseudo_marginal import GammaNoise, ConstantNoise, PseudoMarginalTarget

__all__ = [
    "ToyTarget", "Example2Target", "example1", "example3", "example4",
    "IsingModel", "BinomialPosterior", "load_scores",
    "GammaNoise", "ConstantNoise", "PseudoMarginalTarget",
]
