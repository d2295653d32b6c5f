"""deskcrew: desk-scale multi-arm collaboration with dialog agents and motion planning."""

__version__ = "0.1.0"
