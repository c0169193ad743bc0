"""Coded random access (frameless ALOHA) with a CS-MUD physical layer."""

__version__ = "0.1.0"
