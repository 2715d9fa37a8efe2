"""synq: two-agent Q-learning engine for growing synthons into reactants."""

__version__ = "0.1.0"
