"""Diffusion-augmented contrastive learning on fixed-size biosignal feature vectors."""

__version__ = "0.1.0"
