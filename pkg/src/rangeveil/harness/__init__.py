"""Deterministic in-process simulation of the four-party system."""
