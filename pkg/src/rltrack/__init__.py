"""Desk-scale reinforcement-learning tractography on synthetic fODF phantoms."""

__version__ = "0.1.0"
