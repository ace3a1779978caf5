"""nucleifuse: handcrafted + deep feature fusion for 4-class nucleus
classification.

Pipeline stages: patch extraction -> class balancing -> nine handcrafted
descriptors (plus externally supplied deep feature files) -> PCA selection ->
MLP classification -> probability-pooling cascade or feature-concatenation
ensembles -> metric reports.
"""

__version__ = "0.1.0"

from . import classify, dataset, descriptors, ensemble, featstore, metrics, reduction
from .errors import DependencyError, InputError, NucleifuseError, NumericError

__all__ = [
    "DependencyError",
    "InputError",
    "NucleifuseError",
    "NumericError",
    "classify",
    "dataset",
    "descriptors",
    "ensemble",
    "featstore",
    "metrics",
    "reduction",
]
