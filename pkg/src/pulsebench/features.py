"""STFT magnitude spectrograms, the input representation of the 2-D CNN.

DFT convention: X_k = sum_n x_n w_n exp(-2*pi*i*k*n/N) (NumPy's forward
transform, no normalization), magnitude |X_k| kept for bins 0..N/2. With a
rectangular window the full-spectrum energy therefore satisfies
sum_k |X_k|^2 = N * sum_n x_n^2 (Parseval).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

WINDOW_FNS = ("hann", "rect")


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 64
    hop: int = 8
    window_fn: str = "hann"
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len:
            raise ValidationError("need 0 < hop <= frame_len")
        if self.window_fn not in WINDOW_FNS:
            raise ValidationError(f"window_fn must be one of {WINDOW_FNS}")
        if not self.log_floor > 0:
            raise ValidationError("log_floor must be positive")


@dataclass
class Spectrogram:
    values: np.ndarray       # [freq_bins, frames]
    bin_hz: float
    frame_times: np.ndarray  # frame-center times, seconds


def _window_vector(cfg: StftConfig) -> np.ndarray:
    if cfg.window_fn == "hann":
        return np.hanning(cfg.frame_len)
    return np.ones(cfg.frame_len)


def stft(samples, cfg: StftConfig, sample_rate_hz: float = 200.0) -> Spectrogram:
    """Magnitude spectrogram over sliding frames.

    Frames start at 0, hop, 2*hop, ...; count = floor((len - frame_len)/hop) + 1.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("stft expects a 1-D sample vector")
    if len(x) < cfg.frame_len:
        raise ValidationError(
            f"input of {len(x)} samples is shorter than one frame ({cfg.frame_len})"
        )
    n_frames = (len(x) - cfg.frame_len) // cfg.hop + 1
    win = _window_vector(cfg)
    starts = np.arange(n_frames) * cfg.hop
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len)[starts]
    mags = np.abs(np.fft.rfft(frames * win, axis=1)).T
    return Spectrogram(
        values=mags,
        bin_hz=sample_rate_hz / cfg.frame_len,
        frame_times=(starts + cfg.frame_len / 2.0) / sample_rate_hz,
    )


def log_compress(spec: Spectrogram, floor: float = 1e-10) -> Spectrogram:
    """log(max(magnitude, floor)); finite everywhere."""
    if not floor > 0:
        raise ValidationError("floor must be positive")
    return Spectrogram(
        values=np.log(np.maximum(spec.values, floor)),
        bin_hz=spec.bin_hz,
        frame_times=spec.frame_times,
    )


def logmag_spectrogram(samples, cfg: StftConfig, sample_rate_hz: float = 200.0) -> np.ndarray:
    """Log-magnitude spectrogram values, the [bins, frames] CNN input plane."""
    return log_compress(stft(samples, cfg, sample_rate_hz), cfg.log_floor).values


def spectrogram_to_csv(spec: Spectrogram, path) -> None:
    """Dump a spectrogram as a CSV grid (rows = frequency bins)."""
    with open(path, "w") as fh:
        for row in spec.values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
