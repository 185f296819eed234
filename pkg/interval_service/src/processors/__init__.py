# interval_service/src/processors/__init__.py
"""
Dataset loading and analysis orchestration
"""
