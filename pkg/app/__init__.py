"""
Compressive privatization - locally private distribution estimation via compressive sensing.
"""

__version__ = "1.0.0"
