"""ETES event-guided deblurring toolkit"""

__version__ = "0.1.0"
