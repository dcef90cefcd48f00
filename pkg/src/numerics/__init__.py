"""Reverse-mode differentiation and the ADAM optimizer."""
