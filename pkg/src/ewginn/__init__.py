"""Graph-Instructed (GI) and Edge-Wise Graph-Instructed (EWGI) layers.

Includes a stochastic max-flow regression pipeline for benchmarking them:
graph generation, dataset synthesis, training, metrics and a config grid.
"""

__version__ = "0.1.0"
