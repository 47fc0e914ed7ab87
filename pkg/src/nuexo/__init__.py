"""Desk-scale upper-limb teleoperation stack.

Core layers: coupled-shoulder kinematics, quaternion impedance control, a
simulated humanoid follower arm, a framed binary node protocol with
multi-robot fan-out, synchronized multi-stream logging, and an
encoder-vs-inertial drift benchmark. A FastAPI service wraps the package for
the CLI and the browser operator console.
"""

__version__ = "0.1.0"
