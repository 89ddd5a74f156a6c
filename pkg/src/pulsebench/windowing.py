"""Rolling-window slicing, sub-window overlap, and score fusion.

A record is cut into fixed-length windows on a rolling grid. Each window is
labeled speech when speech covers at least 98% of it (by default), labeled
non-speech when speech covers none of it, and discarded otherwise. Windows
can be subdivided into shorter overlapped sub-windows whose per-class
log-probabilities are summed at test time to decide the parent label.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .data import AlignmentTrack, PpgRecord
from .errors import ValidationError

logger = logging.getLogger(__name__)

SPEECH = "speech"
NONSPEECH = "nonspeech"


@dataclass(frozen=True)
class WindowConfig:
    window_s: float = 1.0
    stride_s: float = 1.0
    sub_window_s: float | None = None
    sub_overlap_frac: float = 0.7
    silence_discard_frac: float = 0.02
    nonspeech_max_speech_frac: float = 0.0

    def __post_init__(self):
        if not self.window_s > 0:
            raise ValidationError("window_s must be positive")
        if not self.stride_s > 0:
            raise ValidationError("stride_s must be positive")
        if not 0.0 <= self.sub_overlap_frac < 1.0:
            raise ValidationError("sub_overlap_frac must lie in [0, 1)")
        if self.sub_window_s is not None and not 0 < self.sub_window_s < self.window_s:
            raise ValidationError("sub_window_s must lie in (0, window_s)")
        if not 0.0 <= self.silence_discard_frac <= 1.0:
            raise ValidationError("silence_discard_frac must lie in [0, 1]")
        if not 0.0 <= self.nonspeech_max_speech_frac <= 1.0:
            raise ValidationError("nonspeech_max_speech_frac must lie in [0, 1]")


@dataclass
class WindowSample:
    """One labeled fixed-duration slice of a record."""

    subject_id: str
    session_id: str
    gender: str
    start_s: float
    sample_rate_hz: float
    samples: np.ndarray
    label: str
    sub_windows: list[np.ndarray] | None = None


def speech_fraction(track: AlignmentTrack, t0: float, t1: float) -> float:
    """Fraction of [t0, t1) covered by speech segments."""
    if not t0 < t1:
        raise ValidationError(f"need t0 < t1, got [{t0}, {t1})")
    covered = 0.0
    for seg in track.segments:
        covered += max(0.0, min(t1, seg.end_s) - max(t0, seg.start_s))
    return covered / (t1 - t0)


def candidate_count(n_samples: int, sample_rate_hz: float, cfg: WindowConfig) -> int:
    """Number of rolling-window positions a record of this length admits."""
    n_win = int(round(cfg.window_s * sample_rate_hz))
    stride = int(round(cfg.stride_s * sample_rate_hz))
    if n_samples < n_win:
        return 0
    return (n_samples - n_win) // stride + 1


def slice_windows(
    record: PpgRecord, track: AlignmentTrack, cfg: WindowConfig
) -> list[WindowSample]:
    """Cut a record into labeled windows.

    A window is speech when its speech fraction is >= 1 - silence_discard_frac,
    non-speech when the fraction is <= nonspeech_max_speech_frac, and is
    dropped otherwise (a mostly-speech window with too much silence teaches
    neither class). A record shorter than one window yields an empty list.
    """
    rate = record.sample_rate_hz
    n_win = int(round(cfg.window_s * rate))
    stride = int(round(cfg.stride_s * rate))
    if n_win < 1 or stride < 1:
        raise ValidationError("window_s and stride_s must each span at least one sample")
    if len(record.samples) < n_win:
        logger.warning(
            "record %s/%s shorter than one window (%d < %d samples); no windows emitted",
            record.subject_id, record.session_id, len(record.samples), n_win,
        )
        return []

    windows = []
    for start in range(0, len(record.samples) - n_win + 1, stride):
        t0 = start / rate
        t1 = (start + n_win) / rate
        frac = speech_fraction(track, t0, t1)
        if frac >= 1.0 - cfg.silence_discard_frac:
            label = SPEECH
        elif frac <= cfg.nonspeech_max_speech_frac:
            label = NONSPEECH
        else:
            continue
        windows.append(
            WindowSample(
                subject_id=record.subject_id,
                session_id=record.session_id,
                gender=record.gender,
                start_s=t0,
                sample_rate_hz=rate,
                samples=record.samples[start:start + n_win].copy(),
                label=label,
            )
        )
    return windows


def subdivide(window: WindowSample, cfg: WindowConfig) -> WindowSample:
    """Attach overlapped sub-windows to a window.

    The sub-window stride is sub_window_s * (1 - sub_overlap_frac); the count
    is floor((window - sub) / stride) + 1, all positions lying inside the
    parent. Arithmetic is done in integer samples.
    """
    if cfg.sub_window_s is None:
        raise ValidationError("cfg.sub_window_s is not set")
    rate = window.sample_rate_hz
    n_win = len(window.samples)
    n_sub = int(round(cfg.sub_window_s * rate))
    if n_sub < 1:
        raise ValidationError("sub_window_s spans no samples at this rate")
    stride = int(round(n_sub * (1.0 - cfg.sub_overlap_frac)))
    if stride < 1:
        raise ValidationError(
            f"sub-window stride rounds to 0 samples "
            f"(sub={n_sub} samples, overlap={cfg.sub_overlap_frac})"
        )
    count = (n_win - n_sub) // stride + 1
    subs = [window.samples[i * stride:i * stride + n_sub].copy() for i in range(count)]
    return WindowSample(
        subject_id=window.subject_id,
        session_id=window.session_id,
        gender=window.gender,
        start_s=window.start_s,
        sample_rate_hz=rate,
        samples=window.samples,
        label=window.label,
        sub_windows=subs,
    )


def fuse_subwindow_scores(per_sub_logits) -> float:
    """Fuse sub-window logit pairs into one probability-like score.

    Each pair is turned into log-probabilities (log-softmax), the
    log-probabilities are summed across sub-windows per class, and the
    normalized exponential of the positive-class (index 1) sum is returned.
    The argmax over the summed log-probabilities is the fused decision;
    with a single sub-window this reduces to its plain softmax probability.
    """
    arr = np.asarray(per_sub_logits, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        raise ValidationError("need at least one sub-window logit pair")
    shifted = arr - arr.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    summed = logp.sum(axis=0)
    summed = summed - summed.max()
    probs = np.exp(summed)
    return float(probs[1] / probs.sum())


def normalize_window(samples) -> np.ndarray:
    """Zero-mean unit-variance scaling; a constant input maps to all zeros."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("cannot normalize an empty window")
    centered = x - x.mean()
    std = centered.std()
    if std == 0.0:
        return np.zeros_like(x)
    return centered / std


# ---------------------------------------------------------------------------
# JSON-lines persistence
# ---------------------------------------------------------------------------


def save_windows(path, windows: list[WindowSample]) -> None:
    """Write windows as JSON lines (sub_windows omitted when absent)."""
    with open(path, "w") as fh:
        for w in windows:
            doc = {
                "subject_id": w.subject_id,
                "session_id": w.session_id,
                "gender": w.gender,
                "start_s": w.start_s,
                "sample_rate_hz": w.sample_rate_hz,
                "label": w.label,
                "samples": [float(v) for v in w.samples],
            }
            if w.sub_windows is not None:
                doc["sub_windows"] = [[float(v) for v in s] for s in w.sub_windows]
            fh.write(json.dumps(doc))
            fh.write("\n")


def load_windows(path) -> list[WindowSample]:
    windows = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            subs = doc.get("sub_windows")
            windows.append(
                WindowSample(
                    subject_id=doc["subject_id"],
                    session_id=doc["session_id"],
                    gender=doc["gender"],
                    start_s=doc["start_s"],
                    sample_rate_hz=doc["sample_rate_hz"],
                    samples=np.asarray(doc["samples"], dtype=np.float64),
                    label=doc["label"],
                    sub_windows=None if subs is None
                    else [np.asarray(s, dtype=np.float64) for s in subs],
                )
            )
    return windows
