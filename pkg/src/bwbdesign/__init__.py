"""Blended-wing-body planform design toolkit.

Pieces: planform geometry and a synthetic aerodynamic oracle, a small dense
autodiff kernel, FiLM-conditioned field and scalar L/D surrogates, a
conditional denoising diffusion model over the 9-D planform box, projected
gradient inverse design, and the accuracy/diversity evaluation metrics.
"""

__version__ = "0.1.0"
