"""Rate-performance bounds for networked control over delayed digital channels."""

__version__ = "0.1.0"
