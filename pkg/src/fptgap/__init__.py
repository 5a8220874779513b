"""Gap-preserving FPT reductions between coverage, 2-CSP, clustering and MaxCover."""
