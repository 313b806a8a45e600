"""Scanpath modelling with a marked neural temporal point process.

Subpackages cover the data model and file formats, the stimulus readout,
the point process core and its tape-based differentiation, training and
sampling, scanpath similarity metrics, the distribution-level evaluation
protocol, saliency metrics, and exploratory statistics.
"""

__version__ = "0.1.0"
