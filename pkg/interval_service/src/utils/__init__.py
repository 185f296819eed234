# interval_service/src/utils/__init__.py
"""
Utility modules for the interval service
"""
