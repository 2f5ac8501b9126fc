"""Small moving target detection with an insect-inspired motion pipeline.

Frames flow through retina, lamina and medulla (:mod:`.early_vision`) into
an STMD correlator whose inputs are corrected by a feedback signal steered
along the background motion (:mod:`.stmd`).  Background motion comes from a
bank of wide-field correlators decoded against calibrated tuning curves
(:mod:`.lptc`).  :class:`Detector` wires the layers together.
"""

from .evalkit import Metrics, RocCurve, extract_detections, match_and_score, roc_sweep
from .kernels import GammaSpec, InvalidParameterError, InvalidStateError
from .lptc import CalibrationError, LptcBankConfig, TuningTable, calibrate_tuning, decode_velocity
from .pipeline import Detector, ModelConfig, StepResult
from .stmd import FeedbackMode, StmdConfig
from .synthgen import SceneSpec, TargetSpec, generate

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "Detector",
    "FeedbackMode",
    "GammaSpec",
    "InvalidParameterError",
    "InvalidStateError",
    "LptcBankConfig",
    "Metrics",
    "ModelConfig",
    "RocCurve",
    "SceneSpec",
    "StepResult",
    "StmdConfig",
    "TargetSpec",
    "TuningTable",
    "calibrate_tuning",
    "decode_velocity",
    "extract_detections",
    "generate",
    "match_and_score",
    "roc_sweep",
]
