"""Multi-robot machine-tending RL workbench.

Batched 2D machine-tending simulator with configurable observations and
reward shaping, a minimal reverse-mode autodiff stack, MAPPO training with a
plain or attention-based centralized critic, and an evaluation harness.
"""

__version__ = "0.1.0"
