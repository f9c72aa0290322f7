"""Casimir piston numerics: spectra, cutoff regularization and piston forces."""

from dotenv import load_dotenv

# Load PISTONLAB_* settings from a .env file in the project root, if present
load_dotenv()

__version__ = "0.1"
