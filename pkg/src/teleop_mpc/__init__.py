"""Teleoperation toolkit: two-tree motion retargeting with separate
translation/rotation reference frames, a shared-control MPC trajectory
planner over a kinematic UR5e, a deterministic closed-loop simulator, and a
live session service for browser clients."""

__version__ = "0.1.0"
