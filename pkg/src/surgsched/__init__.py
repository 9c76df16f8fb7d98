"""surgsched: exact solvers for bilevel surgeon scheduling and surgery
planning, plus equilibrium-efficiency analysis (price of stability and
price of decentralisation)."""

__version__ = "0.1.0"
