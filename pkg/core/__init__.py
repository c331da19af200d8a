"""Core utilities for RLCk MOR."""
