# interval_service/src/core/__init__.py
"""
Numerical core: expressions, parameterization, fitting, profiles and contours
"""
