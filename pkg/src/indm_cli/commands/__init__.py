"""Command modules for the INDM CLI."""
