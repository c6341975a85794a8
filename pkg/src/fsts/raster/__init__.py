"""Pixel-level primitives for tampering: geometry, extraction, removal, text, filters, effects, colour."""
