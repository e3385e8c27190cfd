"""Simulation and diffusion-limit toolkit for a many-server join-or-leave queueing game
under fixed-priority and serve-the-longest-queue scheduling."""

__version__ = "0.1.0"
