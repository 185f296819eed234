# interval_service/src/__init__.py
"""
SR Interval Service: confidence and prediction intervals for symbolic
regression models (linear approximation and likelihood profiles)
"""

__version__ = "1.0.0"
