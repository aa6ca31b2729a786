"""Baseline policies and the grid planning they share."""
