"""Bisimulation distances for probabilistic process terms.

Terms are parsed or built with :mod:`procmetric.syntax`, stepped with
:mod:`procmetric.semantics`, and compared with the exact engine in
:mod:`procmetric.metric`.  :mod:`procmetric.bounds` holds the compositional
distance bounds and :mod:`procmetric.brp` the retransmission protocol study.
"""

from .bounds import Combinator, bound, verify_tightness, witness
from .metric import DistanceResult, MetricEngine, approx, exact_distance, upto_k
from .semantics import BudgetExceeded, Distribution, derive, reachable
from .syntax import Term, parse, render

__all__ = [
    "BudgetExceeded", "Combinator", "DistanceResult", "Distribution", "MetricEngine", "Term",
    "approx", "bound", "derive", "exact_distance", "parse", "reachable", "render",
    "upto_k", "verify_tightness", "witness",
]
