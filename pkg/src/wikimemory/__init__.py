"""Measure salience, deliberation, contextualization and consolidation of an
event's collective memory over Wikipedia revision histories."""

__version__ = "0.1.0"
