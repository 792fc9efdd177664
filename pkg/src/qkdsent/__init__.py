"""Impairment classification for QKD links from QBER/SKR telemetry.

Modules: ``telemetry`` (records, windows, scaling), ``linksim`` (synthetic
links), ``features`` (window feature catalog), ``selection`` (boosted trees and
gain ranking), ``classify`` (MLP), ``pipeline`` (training and streaming),
``report`` (metrics and figures) and ``cli``.
"""

__version__ = "0.1.0"
