"""Synthesis of tampered text images from a fitted mixture of editing configurations."""

__version__ = "0.1.0"
