"""Desk-scale text-guided image inpainting lab.

Toy cascaded diffusion editor with object-masking training, a synthetic
benchmark with exact ground truth, a simulated judging protocol, and
metric-vs-judgment agreement analytics.
"""

__version__ = "0.1.0"
