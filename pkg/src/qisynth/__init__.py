"""Quadratic-invariance certification and robust distributed synthesis."""
