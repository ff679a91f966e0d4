"""Numerical laboratory for bifurcation diagrams of d-concave nonautonomous scalar ODEs."""

__version__ = "0.1.0"
