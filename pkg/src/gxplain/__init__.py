"""Exact formal explanations (trivial and prime-implicant), faithfulness
metrics, synthetic graph tasks, and a small self-explainable dual-channel
graph classifier, all built on plain numpy."""

__version__ = "0.1.0"

from .graphs import Graph, SubgraphMask, SizeMetric, build_graph, apply_mask
from .dsl import parse, evaluate, pretty_print, builtin_classifiers
from .explain import trivial_explanations, pi_explanations
from .faithfulness import PerturbConfig, faith, suf, nec

__all__ = [
    "__version__",
    "Graph", "SubgraphMask", "SizeMetric", "build_graph", "apply_mask",
    "parse", "evaluate", "pretty_print", "builtin_classifiers",
    "trivial_explanations", "pi_explanations",
    "PerturbConfig", "faith", "suf", "nec",
]
