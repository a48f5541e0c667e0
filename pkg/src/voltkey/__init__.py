"""Key agreement from shared power-line noise: simulator, protocol and evaluation tools."""

__version__ = "0.1.0"
