"""Concept drift detection on sparse data streams.

Pipeline pieces: synthetic stream + sparsity generation (``streamgen``),
missingness classification (``missingness``), imputation and imputer
selection (``imputation``), online drift detectors (``detectors``), the
windowed majority-vote ensemble (``ensemble``), prequential evaluation and
detection metrics (``evaluation``), and a config-driven experiment runner
(``cli``).
"""

from .data import DriftSpec, LabeledStream, SparseMatrix

__version__ = "0.1.0"

__all__ = ["SparseMatrix", "LabeledStream", "DriftSpec", "__version__"]
