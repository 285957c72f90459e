"""Feature-importance similarity between real and differentially private
synthetic tabular data."""

__version__ = "0.1.0"
