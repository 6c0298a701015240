"""Camera-pose conditioning toolkit.

Pluecker ray embedding of camera trajectories, sparse motion fields and
their RGB rasterisation, a small block VAE producing a pose latent, and
temporal attention injection with its ablation variants.
"""

__version__ = "0.1.0"
