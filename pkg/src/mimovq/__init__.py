"""Cross-antenna channel prediction with AE, VAE and VQ-VAE predictors on a numpy autodiff core."""

__version__ = "0.1.0"
