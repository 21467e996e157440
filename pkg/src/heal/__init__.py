"""Semi-supervised graph classification with a learned hypergraph branch and a line-graph branch."""

__version__ = "0.1.0"
