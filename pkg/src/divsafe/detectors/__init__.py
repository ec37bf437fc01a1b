"""OOD, uncertainty, shift and perturbation detectors."""

from .calibration import calibrate_threshold
from .categorize import Categorization, categorize, categorize_batch
from .channels import (
    Detector,
    EnsembleDetector,
    LoGlrtDetector,
    MahalanobisDetector,
    McDropoutDetector,
    Observation,
    RejectClassDetector,
    SoftmaxDetector,
    TemperatureDetector,
)
from .isolation_forest import IsolationForest, anomaly_score, c_factor
from .lof import LocalOutlierFactor
from .loglrt import LoGlrtModel
from .mahalanobis import MahalanobisModel
from .monitor import LayerMonitor, MonitorCheck
from .shift import Histogram, ShiftDetector, kl_divergence
from .verdict import Decision, DetectorVerdict

DETECTOR_TYPES = {
    cls.kind: cls
    for cls in (
        RejectClassDetector,
        SoftmaxDetector,
        TemperatureDetector,
        MahalanobisDetector,
        McDropoutDetector,
        EnsembleDetector,
        LoGlrtDetector,
        LayerMonitor,
    )
}


def detector_from_dict(d: dict, model):
    try:
        cls = DETECTOR_TYPES[d["type"]]
    except KeyError:
        raise ValueError(f"unknown detector type {d.get('type')!r}") from None
    return cls.from_dict(d, model)
