"""Knowledge tracing with a dual-stream transformer and heterogeneous graph attention."""

__version__ = "0.1.0"
