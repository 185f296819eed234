# interval_service/__init__.py
