"""Physics-based underwater image synthesis, adversarial enhancement,
and quality evaluation."""

__version__ = "0.1.0"
