"""Instance segmentation and tracking from offset/bandwidth embeddings.

Subpackages by stage: :mod:`segtrack.geometry` (kernel, medoid,
shifting), :mod:`segtrack.losses` (training losses with analytic
gradients), :mod:`segtrack.clustering` (pixels -> instances),
:mod:`segtrack.linking` (instances -> lineage graph),
:mod:`segtrack.metrics` (SEG/DET/TRA/OP), :mod:`segtrack.synth`
(synthetic oracle), :mod:`segtrack.pipeline` (batch driver and I/O).
"""

from ._backend import BACKEND_NAME, HAVE_SPEEDUPS
from .fields import (
    BandwidthField,
    LabelImage,
    NormalizedPoint,
    PredictionSet,
    ScalarField,
    SegPrediction,
    VectorField,
)

__all__ = [
    "BACKEND_NAME",
    "HAVE_SPEEDUPS",
    "BandwidthField",
    "LabelImage",
    "NormalizedPoint",
    "PredictionSet",
    "ScalarField",
    "SegPrediction",
    "VectorField",
]

__version__ = "0.1.0"
