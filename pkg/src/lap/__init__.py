"""Loss-averse prophets: multi-dimensional optimal stopping with a
comparative reference point."""

__version__ = "0.1.0"
