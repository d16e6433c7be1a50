"""
Core components of coalgene.

Partitions and coagulation measures, the population models, the genealogy
engine, the Poisson-Dirichlet analysis and the convergence diagnostics.
"""
