"""foldlab: desk-scale toolkit for fold-singularity invariants of generalized
Radon transforms over curve families in R^3."""

__version__ = "0.1.0"
