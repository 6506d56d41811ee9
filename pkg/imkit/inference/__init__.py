"""Inferential model library."""
