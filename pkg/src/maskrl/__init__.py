"""Action masking for reinforcement learning in operations research."""

__version__ = "0.1.0"
