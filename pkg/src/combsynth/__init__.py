"""Combiner synthesis for black-box stream commands and pipeline parallelization."""
__version__ = "0.1.0"
