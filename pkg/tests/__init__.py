"""Tests for the INDM toolkit."""
