"""Active-subspace fine-tuning toolkit for a toy sequence VAE."""

__version__ = "0.1.0"
