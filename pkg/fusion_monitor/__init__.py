"""
Sensor fusion for pipeline monitoring networks: EKF, FUSVAF and consensus,
plus a three-level (node / cluster head / gateway) simulator.
"""

__version__ = "1.0.0"
