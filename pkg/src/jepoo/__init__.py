"""Melody extraction at desk scale: joint per-frame pitch/onset/offset
prediction trained with Pareto-weighted losses, plus synthetic data
generation, decoding, and note-level evaluation."""

__version__ = "0.1.0"
