"""Toolkit for measuring how news coverage of high-impact events evolves.

Builds per-event corpora over a [-7, +30] day window around an event onset,
splits them into event and baseline subsets, and derives daily time series of
publication volume, semantic drift, semantic dispersion, and term relevance,
aggregated per event category with confidence bands.
"""

__version__ = "0.1.0"

WINDOW_START = -7
WINDOW_END = 30
WINDOW_DAYS = WINDOW_END - WINDOW_START + 1
