"""Numerical laboratory for Higgs bundles over flat Kähler lattice domains."""

__version__ = "0.1.0"
