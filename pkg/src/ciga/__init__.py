"""Invariant graph learning toolkit.

Library layout mirrors the pipeline: ``numerics`` (autodiff substrate),
``graphdata`` (graphs, batches, persistence), ``scmgen`` (benchmark
generator), ``model`` (featurizer + classifier GNNs), ``objectives``
(losses), ``trainer`` (optimization loop), ``harness`` (metrics, multi-seed
experiments, plots) and ``cli``.
"""

__version__ = "0.1.0"
