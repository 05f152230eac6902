"""Numeric kernels with a compiled fast path.

The Cython extension (_core) implements the pedigree peeling recursion and
the boosted-tree split search; if it was not built, the numpy fallback is
used instead. Both backends implement the same contracts and agree to
floating-point roundoff (see tests/test_kernels.py and benchmarks/).
"""

try:
    from ._core import PeelContext, best_split_column, peel_posterior

    BACKEND = "compiled"
except ImportError:  # extension not built
    from ._fallback import PeelContext, best_split_column, peel_posterior

    BACKEND = "python"

from . import _fallback

__all__ = ["PeelContext", "peel_posterior", "best_split_column", "BACKEND", "_fallback"]
