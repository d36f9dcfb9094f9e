"""Simulator and control stack for autonomous microneedle vein cannulation."""

__version__ = "0.1.0"
