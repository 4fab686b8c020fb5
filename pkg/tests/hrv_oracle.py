"""Independent straight-line re-implementation of the 25 HRV features.

Used as the oracle for the feature extractor: every definition is written
out directly (explicit sums, a dense not-a-knot spline solve, a manual
windowed-FFT PSD) without calling the package code or scipy, so agreement
is meaningful.
"""

import numpy as np

VLF = (0.003, 0.04)
LF = (0.04, 0.15)
HF = (0.15, 0.40)
FS = 4.0
NPERSEG = 256


def notaknot_spline_eval(t, y, xq):
    """Evaluate the not-a-knot cubic spline through (t, y) at xq.

    Solves the classic second-derivative formulation densely.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    h = np.diff(t)
    A = np.zeros((n, n))
    rhs = np.zeros(n)
    for i in range(1, n - 1):
        A[i, i - 1] = h[i - 1]
        A[i, i] = 2.0 * (h[i - 1] + h[i])
        A[i, i + 1] = h[i]
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1])
    # not-a-knot: third derivative continuous across the first and last
    # interior knots
    A[0, 0] = 1.0 / h[0]
    A[0, 1] = -(1.0 / h[0] + 1.0 / h[1])
    A[0, 2] = 1.0 / h[1]
    A[n - 1, n - 3] = 1.0 / h[-2]
    A[n - 1, n - 2] = -(1.0 / h[-2] + 1.0 / h[-1])
    A[n - 1, n - 1] = 1.0 / h[-1]
    m = np.linalg.solve(A, rhs)

    idx = np.clip(np.searchsorted(t, xq, side="right") - 1, 0, n - 2)
    hi = h[idx]
    ta, tb = t[idx], t[idx + 1]
    return (
        m[idx] * (tb - xq) ** 3 / (6 * hi)
        + m[idx + 1] * (xq - ta) ** 3 / (6 * hi)
        + (y[idx] / hi - m[idx] * hi / 6) * (tb - xq)
        + (y[idx + 1] / hi - m[idx + 1] * hi / 6) * (xq - ta)
    )


def linear_interp_eval(t, y, xq):
    idx = np.clip(np.searchsorted(t, xq, side="right") - 1, 0, len(t) - 2)
    frac = (xq - t[idx]) / (t[idx + 1] - t[idx])
    return y[idx] + frac * (y[idx + 1] - y[idx])


def manual_welch(x, fs, nperseg):
    """Averaged periodogram: periodic Hann, 50% overlap, density scaling."""
    x = np.asarray(x, dtype=float)
    nperseg = min(nperseg, len(x))
    noverlap = nperseg // 2
    step = nperseg - noverlap
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(nperseg) / nperseg)
    scale = 1.0 / (fs * np.sum(win * win))
    segments = []
    start = 0
    while start + nperseg <= len(x):
        seg = x[start : start + nperseg] * win
        spec = np.fft.rfft(seg)
        p = (spec.real**2 + spec.imag**2) * scale
        if nperseg % 2 == 0:
            p[1:-1] *= 2.0
        else:
            p[1:] *= 2.0
        segments.append(p)
        start += step
    psd = np.mean(segments, axis=0)
    freqs = np.fft.rfftfreq(nperseg, 1.0 / fs)
    return freqs, psd


def band_power(freqs, psd, band):
    df = freqs[1] - freqs[0]
    total = 0.0
    for f, p in zip(freqs, psd):
        if band[0] <= f < band[1]:
            total += p * df
    return total


def oracle_features(intervals_ms):
    """Return the 25 features as a dict, computed from first principles."""
    x = np.asarray(intervals_ms, dtype=float)
    n = len(x)
    d = x[1:] - x[:-1]

    out = {}
    mean_nni = sum(x) / n
    out["mean_nni"] = mean_nni
    out["sdnn"] = np.sqrt(sum((v - mean_nni) ** 2 for v in x) / (n - 1))
    if len(d) >= 2:
        dmean = sum(d) / len(d)
        out["sdsd"] = np.sqrt(sum((v - dmean) ** 2 for v in d) / (len(d) - 1))
    else:
        out["sdsd"] = 0.0
    out["nni_50"] = float(sum(1 for v in d if abs(v) > 50.0))
    out["nni_20"] = float(sum(1 for v in d if abs(v) > 20.0))
    out["pnni_50"] = 100.0 * out["nni_50"] / (n - 1)
    out["pnni_20"] = 100.0 * out["nni_20"] / (n - 1)
    out["rmssd"] = np.sqrt(sum(v * v for v in d) / len(d))
    out["median_nni"] = float(np.median(x))
    out["range_nni"] = float(max(x) - min(x))
    out["cvsd"] = out["rmssd"] / mean_nni
    out["cvnni"] = out["sdnn"] / mean_nni

    hr = 60000.0 / x
    hr_mean = sum(hr) / n
    out["mean_hr"] = hr_mean
    out["max_hr"] = float(max(hr))
    out["min_hr"] = float(min(hr))
    out["std_hr"] = np.sqrt(sum((v - hr_mean) ** 2 for v in hr) / n)

    t = np.cumsum(x) / 1000.0
    grid = np.arange(t[0], t[-1], 1.0 / FS)
    if len(grid) < 2:
        vlf = lf = hf = 0.0
    else:
        if n >= 4:
            resampled = notaknot_spline_eval(t, x, grid)
        else:
            resampled = linear_interp_eval(t, x, grid)
        centered = resampled - sum(resampled) / len(resampled)
        freqs, psd = manual_welch(centered, FS, NPERSEG)
        vlf = band_power(freqs, psd, VLF)
        lf = band_power(freqs, psd, LF)
        hf = band_power(freqs, psd, HF)
    out["vlf"] = vlf
    out["lf"] = lf
    out["hf"] = hf
    out["total_power"] = vlf + lf + hf
    out["lfnu"] = 100.0 * lf / (lf + hf) if lf + hf > 0 else 0.0
    out["hfnu"] = 100.0 * hf / (lf + hf) if lf + hf > 0 else 0.0
    out["lf_hf_ratio"] = lf / hf if hf > 0 else 0.0

    sd1 = out["sdsd"] / np.sqrt(2.0)
    sd2 = np.sqrt(max(0.0, 2.0 * out["sdnn"] ** 2 - out["sdsd"] ** 2 / 2.0))
    big_l = 4.0 * sd2
    big_t = 4.0 * sd1
    out["csi"] = big_l / big_t if big_t > 0 else 0.0
    out["cvi"] = float(np.log10(big_l * big_t)) if big_l * big_t > 0 else 0.0
    return out


def random_nn_series(rng, min_len=8, max_len=240):
    """A plausible random NN series: lognormal base with slow modulation."""
    n = int(rng.integers(min_len, max_len + 1))
    base = rng.uniform(600.0, 1100.0)
    wobble = rng.uniform(5.0, 80.0)
    trend = wobble * np.sin(np.linspace(0, rng.uniform(1, 8) * np.pi, n))
    noise = rng.normal(0.0, wobble, size=n)
    series = np.clip(base + trend + noise, 300.0, 2800.0)
    return series
