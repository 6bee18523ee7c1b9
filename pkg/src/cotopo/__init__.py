"""Joint optimization of direct-connect topology, routing and DNN parallelization."""

__version__ = "0.1.0"
