"""Desk-scale simulator of a wheelchair tennis robot's perception and
interception stack: ball flight, delayed multi-camera sensing, lag-compensated
tracking, interception prediction, stroke generation, and base planning."""

__version__ = "0.1.0"
