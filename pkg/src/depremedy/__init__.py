"""Vulnerability remediation over library dependency graphs."""

__version__ = "0.1.0"
