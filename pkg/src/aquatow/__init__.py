"""Simulation and MPC stack for towing a floating object with a USV/UAV team."""

__version__ = "0.1.0"
