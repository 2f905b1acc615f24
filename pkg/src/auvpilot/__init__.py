"""auvpilot: parallel 6DOF underwater-vehicle simulation, PPO training of a
small velocity/attitude policy, and LOS path-following evaluation."""

__version__ = "0.1.0"
