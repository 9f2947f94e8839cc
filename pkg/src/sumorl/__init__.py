"""Search-based uncertainty estimation for model-based offline RL."""

__version__ = "0.1.0"
