"""pedboost: Mendelian carrier-risk models from pedigrees, plus boosted extension.

Exact pedigree-based carrier probabilities (Hardy-Weinberg priors, Mendelian
transmission, nuclear-family peeling), a family simulator, a gradient-tree
booster that can start from an existing model's predictions, recalibrators,
and an evaluation/experiment harness.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
