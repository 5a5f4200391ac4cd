"""
Provides conformalkit version information.
"""

# This file is auto-generated! Do not edit!
# Use `python -m incremental.update conformalkit` to change this file.

from incremental import Version

__version__ = Version("conformalkit", 26, 10, 0, dev=1)
__all__ = ["__version__"]
