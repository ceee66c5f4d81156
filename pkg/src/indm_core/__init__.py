"""Implicit Nonlinear Diffusion Model engine.

This core library contains the numerics: a small reverse-mode autodiff, the
coupling flow, the linear latent SDE, the score network, the NELBO, samplers,
likelihood evaluation and the induced-diffusion diagnostics.
"""

__version__ = "0.1.0"
