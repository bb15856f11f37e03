"""bytehue: compiler-bug scanning for EVM bytecode via RGB images and a small CNN."""

__version__ = "0.1.0"
