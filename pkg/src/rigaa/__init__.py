"""Reinforcement-learning informed evolutionary search for scenario-based testing."""

__version__ = "0.1.0"
