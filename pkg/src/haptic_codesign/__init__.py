"""Prediction and communication co-design for haptic teleoperation links."""

__version__ = "0.1.0"
