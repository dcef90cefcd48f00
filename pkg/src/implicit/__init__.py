"""Coordinates, periodic encoding and local-ensemble query construction."""
