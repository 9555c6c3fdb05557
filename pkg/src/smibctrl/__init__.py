"""Neural adaptive excitation control testbench for a single-machine/infinite-bus system."""

__version__ = "0.1.0"
