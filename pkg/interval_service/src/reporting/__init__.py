# interval_service/src/reporting/__init__.py
"""
Report building, writers and loaders for emitted files
"""
