"""Multimodal reading recognition from egocentric gaze, RGB crops and head motion."""

__version__ = "0.1.0"
