"""Concurrent credit assignment: reward seeking plus maximum-entropy state occupancy."""
from .core import Hyperparams, ReplayBuffer, RngStream, Trajectory, Transition

__all__ = ["Hyperparams", "ReplayBuffer", "RngStream", "Trajectory", "Transition"]
__version__ = "0.1.0"
