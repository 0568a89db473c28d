"""Desk-scale joint RGB-D video diffusion with Plücker-ray camera control."""

__version__ = "0.1.0"
