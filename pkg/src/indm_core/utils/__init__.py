"""Utility functions for the INDM core."""
