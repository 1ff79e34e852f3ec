"""Lock-step simulator and protocol library for synchronous Byzantine agreement."""

__version__ = "0.1.0"
