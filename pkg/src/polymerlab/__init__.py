"""Desk-scale numerics for lattice walk intersection moments, Poisson
approximation of pair-meeting counts, and disc-hitting asymptotics."""

__version__ = "0.1.0"
