"""Ferromagnetic Potts model on random regular graphs: mean-field analysis,
exact small-graph oracles, Glauber and Swendsen-Wang dynamics, percolation
and tree broadcasting."""

__version__ = "0.1.0"
