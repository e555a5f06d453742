"""donbench: coupled-physics PDE benchmarks for operator networks.

The package generates multiphysics datasets with a built-in 1D finite
element solver, trains single- and multi-branch operator networks (both
feedforward and recurrent branches) on them, and measures how prediction
accuracy depends on the match between branch structure and physical
coupling strength.
"""

__version__ = "0.1.0"
