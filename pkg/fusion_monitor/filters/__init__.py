"""
Fusion algorithms: extended Kalman filter, FUSVAF and average consensus
"""
