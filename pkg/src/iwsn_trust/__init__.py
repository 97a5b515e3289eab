"""Trust management for clustered industrial wireless sensor networks."""

__version__ = "0.1.0"
