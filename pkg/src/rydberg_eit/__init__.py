"""Multi-level Rydberg EIT / Autler-Townes spectra and RF field inference."""

__version__ = "0.1.0"
