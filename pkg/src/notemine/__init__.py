"""Theme mining for clinical procedure notes."""

__version__ = "0.1.0"
