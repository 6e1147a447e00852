"""Real-time human tracking and rule-based action recognition from
detection, optical-flow and pose streams."""

__version__ = "0.1.0"
