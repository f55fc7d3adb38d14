"""Connectivity-based parcellation of surface meshes in logit space.

This package clusters per-seed tractograms after mapping them through the
logit link, using a spatially constrained Ward agglomeration, and compares
the resulting parcellations with the adjusted Rand index.
"""

__version__ = '0.1.0'
