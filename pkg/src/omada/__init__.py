"""On-manifold adversarial data augmentation: manifold model, latent attack,
classifier training with augmentation baselines, and calibration/OOD metrics."""

__version__ = "0.1.0"

from .backends import available_backends, get_backend
