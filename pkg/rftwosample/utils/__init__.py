"""Numerics, file handling and error types shared across the toolkit."""
