"""Deterministic 2D simulator, scene generator, baseline agents and metric
harness for dual-mode (sweep + grasp) cleaning robots."""
from __future__ import annotations

__version__ = "0.1.0"
