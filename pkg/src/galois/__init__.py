"""Sketch-based white-box policies for gridworld tasks: differentiable
clause learning over a three-hole program sketch, with program extraction
and cross-task weight reuse."""

__version__ = "0.1.0"
