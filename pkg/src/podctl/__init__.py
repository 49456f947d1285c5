"""Proper orthogonal decomposition, reduced-order models and certified optimal control."""
