"""Any-resolution tiling planner and visual instruction-tuning mixture compiler."""

__version__ = "0.1.0"
