"""Contact-rich manipulation planning with a compliance-derived contact crust."""

__version__ = "0.1.0"
