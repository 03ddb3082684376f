"""Deep random trigonometric feature networks with Student's-t variational
posteriors, trained by minimizing a t-divergence objective."""

__all__ = ["__version__"]
__version__ = "0.1.0"
