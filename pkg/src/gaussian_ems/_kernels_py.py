"""NumPy implementations of the numeric kernels.

Used when the compiled ``_ckernels`` extension is unavailable, and as the
reference the extension is tested against.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def nsdf_frames(x, starts, win, min_lag, max_lag):
    """Normalized square difference function for each analysis frame.

    Returns an array of shape ``(len(starts), max_lag + 1)``; column ``t``
    holds ``2 * sum(x[j] x[j+t]) / sum(x[j]**2 + x[j+t]**2)`` over the frame,
    with zeros for lags below ``min_lag`` and for silent frames.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    out = np.zeros((len(starts), max_lag + 1))
    if len(starts) == 0:
        return out
    frames = sliding_window_view(x, win)[starts]
    nfft = 1 << int(np.ceil(np.log2(2 * win)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, : max_lag + 1]
    sq = np.concatenate([np.zeros((len(starts), 1)), np.cumsum(frames**2, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    m = sq[:, win - lags] + (sq[:, [win]] - sq[:, lags])
    valid = m > 0
    out[valid] = 2.0 * acf[valid] / m[valid]
    out[:, :min_lag] = 0.0
    return out


def additive(phase, amps):
    """Sum of harmonics: ``sum_h amps[h-1] * sin(h * phase)``."""
    phase = np.asarray(phase, dtype=np.float64)
    out = np.zeros_like(phase)
    for h, a in enumerate(np.asarray(amps, dtype=np.float64), start=1):
        if a != 0.0:
            out += a * np.sin(h * phase)
    return out
