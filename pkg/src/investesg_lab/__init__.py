"""Climate-investment Markov game simulator, social-dilemma analyzer and PPO-family trainers."""

from __future__ import annotations

__all__ = ["__version__"]

__version__ = "0.1.0"
