# bplambda/__init__.py
"""Accumulate BP(lambda): online synthetic-gradient learning for recurrent networks"""

__version__ = "1.0"
