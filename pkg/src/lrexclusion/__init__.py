"""Long-range weakly asymmetric exclusion: exact simulation and verification lab."""

__version__ = "0.1.0"
