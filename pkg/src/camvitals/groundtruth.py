"""Reference rates from the physiological channels.

HR: R peaks from the derivative of the baseline-corrected ECG, rebuilt
into a PPG-like oscillation by spline interpolation, then the same
spectral estimator as the video path. RR: the belt channel through the
estimator directly.
"""

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .dsp import (BandpassSpec, bandpass, cubic_spline, detrend, median_rate,
                  rate_flags, stft_peak_freqs)


@dataclass
class PeakList:
    indices: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("peak indices must be strictly increasing")

    def times(self):
        return self.indices / self.sample_rate

    def __len__(self):
        return len(self.indices)


def ecg_peaks(ecg, cfg=None):
    """R-peak positions from the ECG derivative.

    Pipeline: moving-mean baseline removal (0.5 s half-span), first
    difference d, threshold at half the 95th percentile of |d|, local
    maxima of d above the threshold, thinned by a 0.25 s refractory
    period keeping the larger candidate on conflict.
    """
    cfg = cfg or PipelineConfig()
    if ecg.duration < 2.0:
        raise ValueError(f"need >= 2 s of ECG, got {ecg.duration:.3f} s")
    corrected = detrend(ecg, cfg.ecg_detrend_s)
    d = np.diff(corrected.samples)
    theta = cfg.ecg_threshold_factor * np.percentile(np.abs(d), cfg.ecg_percentile)
    refractory = int(round(cfg.ecg_refractory_s * ecg.sample_rate))

    kept = []
    for i in range(1, len(d) - 1):
        # strict rise on the left tolerates flat tops on the right
        if d[i] > theta and d[i] > d[i - 1] and d[i] >= d[i + 1]:
            if kept and i - kept[-1] < refractory:
                if d[i] > d[kept[-1]]:
                    kept[-1] = i
            else:
                kept.append(i)
    if not kept:
        raise ValueError("no ECG peaks found")
    return PeakList(np.array(kept), ecg.sample_rate)


def ppg_like(peaks, duration):
    """Oscillation reconstructed from peak times.

    Knots: +1 at each peak, -1 at each inter-peak midpoint; natural cubic
    spline sampled at the ECG rate. The fundamental frequency equals the
    beat rate.
    """
    if len(peaks) < 3:
        raise ValueError(f"need >= 3 peaks, got {len(peaks)}")
    pt = peaks.times()
    knot_t = np.empty(2 * len(pt) - 1)
    knot_v = np.empty_like(knot_t)
    knot_t[0::2] = pt
    knot_v[0::2] = 1.0
    knot_t[1::2] = 0.5 * (pt[:-1] + pt[1:])
    knot_v[1::2] = -1.0
    return cubic_spline(knot_t, knot_v, peaks.sample_rate, duration)


def gt_hr(ecg, cfg=None):
    """Reference heart rate in beats/minute from an ECG channel."""
    cfg = cfg or PipelineConfig()
    bpm, _ = gt_hr_flagged(ecg, cfg)
    return bpm


def gt_hr_flagged(ecg, cfg=None):
    cfg = cfg or PipelineConfig()
    peaks = ecg_peaks(ecg, cfg)
    signal = ppg_like(peaks, ecg.duration)
    filtered = bandpass(signal, BandpassSpec(cfg.hr_low, cfg.hr_high, cfg.filter_order))
    freqs = stft_peak_freqs(filtered, cfg.physio_stft, cfg.hr_band)
    return median_rate(freqs), rate_flags(freqs, cfg.hr_band, cfg.physio_stft, ecg.sample_rate)


def gt_rr(resp, cfg=None):
    """Reference respiration rate in breaths/minute from the belt channel."""
    cfg = cfg or PipelineConfig()
    brpm, _ = gt_rr_flagged(resp, cfg)
    return brpm


def gt_rr_flagged(resp, cfg=None):
    cfg = cfg or PipelineConfig()
    filtered = bandpass(resp, BandpassSpec(cfg.rr_low, cfg.rr_high, cfg.filter_order))
    freqs = stft_peak_freqs(filtered, cfg.physio_stft, cfg.rr_band)
    return median_rate(freqs), rate_flags(freqs, cfg.rr_band, cfg.physio_stft, resp.sample_rate)
