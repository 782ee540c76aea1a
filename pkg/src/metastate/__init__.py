"""Metastability toolkit for finite reversible Markov chains."""

__version__ = "0.1.0"
