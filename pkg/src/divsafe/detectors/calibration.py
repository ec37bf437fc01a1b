import math

import numpy as np

from ..errors import CalibrationError

MIN_CALIBRATION_SAMPLES = 50


def calibrate_threshold(scores, retention: float = 0.95, min_samples: int = MIN_CALIBRATION_SAMPLES) -> float:
    """Nearest-rank quantile of held-out ID scores.

    A sample is declared OOD when its score is strictly above the returned
    threshold, so at least ``retention`` of the calibration scores stay ID.
    """
    s = np.sort(np.asarray(scores, dtype=float).ravel())
    if len(s) < min_samples:
        raise CalibrationError(f"need at least {min_samples} calibration scores, got {len(s)}")
    if not 0.0 < retention < 1.0:
        raise CalibrationError("retention must lie in (0, 1)")
    if not np.all(np.isfinite(s)):
        raise CalibrationError("calibration scores must be finite")
    rank = math.ceil(retention * len(s) - 1e-9)
    return float(s[max(rank, 1) - 1])
