"""Utility functions for RLCk MOR."""
