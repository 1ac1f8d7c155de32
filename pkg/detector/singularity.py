from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, find_peaks, hilbert, sosfiltfilt

from solver.trace import TraceSeries
from util.errors import ConfigurationError
from util.log import log
from util.resultcsv import write_columns

SAMPLES_PER_BAND_TOP = 4


@dataclass
class SingularityReport:
    """
    Band-energy detections on a trace.

    Attributes:
        locations (List[float]): Curve parameters of the detections (sub-sample, quadratic fit).
        scores (List[float]): Band energy at each detection relative to the median band energy.
        threshold (float): The absolute energy threshold applied.
        band (Tuple[float, float]): Pass band in cycles per unit time.
        median (float): Median of the band energy E(s).
        consistent (Optional[bool]): Outcome of the refinement check, None if not performed.
    """
    locations: List[float]
    scores: List[float]
    threshold: float
    band: Tuple[float, float]
    median: float
    floor: float
    spacing: float
    consistent: Optional[bool] = None
    flags: List[str] = field(default_factory=list)
    r: Optional[np.ndarray] = field(default=None, repr=False)
    energy: Optional[np.ndarray] = field(default=None, repr=False)

    def near(self, r: float, tolerance: float) -> bool:
        return any(abs(location - r) <= tolerance for location in self.locations)

    def to_dict(self) -> dict:
        return {"locations": self.locations, "scores": self.scores, "threshold": self.threshold, "band": list(self.band),
                "median": self.median, "floor": self.floor, "spacing": self.spacing, "consistent": self.consistent, "flags": self.flags}

    def write_scores(self, filename: str):
        """The score curve E(s) as CSV (columns r, energy)."""
        write_columns(filename, {"r": self.r, "energy": self.energy})


def band_energy(trace: TraceSeries, band: Tuple[float, float], smoothing: float = 4.0) -> np.ndarray:
    """
    E(s): squared Hilbert envelope of the band-passed trace (4th order Butterworth, zero phase),
    smoothed over `smoothing` periods of the band center.

    Raises:
        ConfigurationError: If the band is empty or not sampled at 4x its top frequency.
    """
    low, high = band
    span = float(trace.times[-1] - trace.times[0])
    if span <= 0:
        raise ConfigurationError("trace covers no time")
    rate = (len(trace.times) - 1) / span
    if not 0 < low < high:
        raise ConfigurationError(f"invalid band [{low}, {high}]")
    if rate < SAMPLES_PER_BAND_TOP * high:
        raise ConfigurationError(f"band top {high} needs {SAMPLES_PER_BAND_TOP * high:.4g} samples per unit time, trace has {rate:.4g}")

    sos = butter(4, [low, high], btype="band", fs=rate, output="sos")
    filtered = sosfiltfilt(sos, trace.values)
    envelope = np.abs(hilbert(filtered)) ** 2
    window = max(1, int(round(smoothing * rate / np.sqrt(low * high))))
    return uniform_filter1d(envelope, size=window, mode="nearest")


def _refine_peak(r: np.ndarray, energy: np.ndarray, k: int) -> float:
    if k == 0 or k == len(energy) - 1:
        return float(r[k])
    left, center, right = energy[k - 1], energy[k], energy[k + 1]
    curvature = left - 2 * center + right
    if curvature >= 0:
        return float(r[k])
    offset = 0.5 * (left - right) / curvature
    return float(r[k] + np.clip(offset, -1.0, 1.0) * (r[1] - r[0]))


def detect_trace_singularities(trace: TraceSeries, band: Tuple[float, float], theta: float = 6.0, floor: float = 0.0,
                               relative_floor: float = 1e-6, smoothing: float = 4.0) -> SingularityReport:
    """
    Detections where the band energy E(s) exceeds theta * median(E) and the absolute floor
    max(floor, relative_floor * mean(trace^2)); peaks are localized by a quadratic fit.
    """
    energy = band_energy(trace, band, smoothing)
    median = float(np.median(energy))
    floor = max(float(floor), relative_floor * float(np.mean(trace.values ** 2)))
    threshold = max(theta * median, floor)

    locations, scores = [], []
    if np.max(energy) > 0:
        rate = (len(trace.times) - 1) / float(trace.times[-1] - trace.times[0])
        distance = max(1, int(round(smoothing * rate / np.sqrt(band[0] * band[1]))))
        peaks, _ = find_peaks(energy, height=threshold, distance=distance)
        for k in peaks:
            locations.append(_refine_peak(trace.r, energy, int(k)))
            scores.append(float(energy[k] / median) if median > 0 else float("inf"))

    log.detector_verbose(f"{trace.label or 'trace'}: {len(locations)} detection(s) above {threshold:.3e} (median {median:.3e})")
    return SingularityReport(locations, scores, threshold, (float(band[0]), float(band[1])), median, floor, trace.spacing,
                             r=trace.r, energy=energy)


def refinement_consistent(reports: Sequence[SingularityReport], r: Optional[float] = None, tolerance: Optional[float] = None) -> bool:
    """
    True if every report detects near `r` (or, without r, if each location of the first report is
    matched in all others) within `tolerance` (default: 2 samples of the coarsest report).
    """
    if not reports:
        return False
    if tolerance is None:
        tolerance = 2 * max(report.spacing for report in reports)
    if r is not None:
        return all(report.near(r, tolerance) for report in reports)
    return all(all(other.near(location, tolerance) for other in reports[1:]) for location in reports[0].locations)


def precision_recall(detected: Sequence[float], expected: Sequence[float], tolerance: float) -> Tuple[int, int, int]:
    """(true positives, false positives, false negatives) matching detections to expected locations one to one."""
    unmatched = list(expected)
    true_positives = 0
    for location in detected:
        match = next((e for e in unmatched if abs(e - location) <= tolerance), None)
        if match is not None:
            unmatched.remove(match)
            true_positives += 1
    return true_positives, len(detected) - true_positives, len(unmatched)
