"""Figures from loopgibbs result tables.

Consumes only the published CSV schemas; never imports the engine.  Rendering
is pure: fixed style, no timestamps, salted SVG ids, so one table always
yields byte-identical image files.
"""

__version__ = "0.1.0"
