"""PPG recordings, speech alignments, and the synthetic session generator.

The generator mimics a wrist-sensor acquisition protocol: a cohort of
subjects, each recorded over five session types (two credit-card numbers,
pure silence, four PIN numbers, read sentences, one minute of free speech).
Each session yields a pulse waveform sampled at a nominal 200 Hz plus an
alignment track of speech segments, so the full pipeline is runnable
without any real recordings.

On-disk formats (JSON)
----------------------
Record file::

    {"subject_id": ..., "session_id": ..., "gender": ...,
     "sample_rate_hz": ..., "samples": [...]}

Alignment file::

    {"record_duration_s": ..., "segments": [{"start_s", "end_s", "text"?}]}

All synthesis is a pure function of its seeds: the same (profile, template,
seed) triple always produces the same record and alignment, bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .seeding import derive_seed

GENDERS = ("male", "female", "unknown")
SESSION_KINDS = ("credit_card", "silence", "pin", "sentences", "free_speech")

DEFAULT_SAMPLE_RATE_HZ = 200.0

# Sampling-clock deviation of the capture device (per-sample mean/sigma, seconds).
JITTER_MU_S = 13.32e-6
JITTER_SIGMA_S = 202.58e-6

# Cohort default for the planted speech perturbation amplitude. Frozen from the
# pre-registered oracle run in scripts/oracle_coupling_run.py.
DEFAULT_SPEECH_COUPLING = 0.25

_SYSTOLIC_CENTER = 0.18  # beat phase of the systolic peak


@dataclass
class PpgRecord:
    """One subject-session pulse waveform with its acquisition metadata."""

    subject_id: str
    session_id: str
    sample_rate_hz: float
    samples: np.ndarray
    gender: str = "unknown"

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValidationError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if not self.sample_rate_hz > 0:
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValidationError("samples must be a non-empty 1-D sequence")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class Segment:
    """One speech interval, [start_s, end_s), with optional transcript."""

    start_s: float
    end_s: float
    text: str | None = None


@dataclass
class AlignmentTrack:
    """Ordered, non-overlapping speech segments covering one record."""

    segments: list[Segment]
    record_duration_s: float

    def __post_init__(self):
        if not self.record_duration_s > 0:
            raise ValidationError("record_duration_s must be positive")
        prev_end = None
        for seg in self.segments:
            if not (0.0 <= seg.start_s < seg.end_s <= self.record_duration_s):
                raise ValidationError(
                    f"segment [{seg.start_s}, {seg.end_s}) outside "
                    f"[0, {self.record_duration_s}) or empty"
                )
            if prev_end is not None and seg.start_s < prev_end:
                raise ValidationError(
                    f"segments overlap or are unsorted at start_s={seg.start_s}"
                )
            prev_end = seg.end_s

    def speech_time_s(self) -> float:
        return float(sum(s.end_s - s.start_s for s in self.segments))


@dataclass(frozen=True)
class PulseMorphology:
    """Per-subject beat shape: two Gaussian bumps (systolic + dicrotic)."""

    systolic_width: float  # Gaussian sigma, in beat-phase units
    notch_depth: float     # dicrotic bump amplitude relative to systolic
    notch_delay: float     # phase offset from systolic peak to dicrotic bump
    amplitude: float


@dataclass(frozen=True)
class SubjectProfile:
    """Everything the generator needs to synthesize one subject's sessions."""

    subject_id: str
    gender: str
    heart_rate_hz: float
    pulse_morphology: PulseMorphology
    baseline_drift: tuple[float, float]  # (amplitude, frequency_hz)
    noise_sigma: float
    speech_coupling: float

    def __post_init__(self):
        if not (0.8 <= self.heart_rate_hz <= 2.0):
            raise ValidationError(
                f"heart_rate_hz must lie in [0.8, 2.0], got {self.heart_rate_hz}"
            )
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.speech_coupling < 0:
            raise ValidationError("speech_coupling must be >= 0")


@dataclass(frozen=True)
class SessionTemplate:
    """Session kind plus target duration; the layout rule lives in the kind."""

    kind: str
    duration_s: float = 30.0

    def __post_init__(self):
        if self.kind not in SESSION_KINDS:
            raise ValidationError(f"kind must be one of {SESSION_KINDS}, got {self.kind!r}")


def default_templates() -> list[SessionTemplate]:
    """The five session types of the recording protocol (free speech runs 60 s)."""
    return [
        SessionTemplate("credit_card", 35.0),
        SessionTemplate("silence", 30.0),
        SessionTemplate("pin", 30.0),
        SessionTemplate("sentences", 30.0),
        SessionTemplate("free_speech", 60.0),
    ]


# ---------------------------------------------------------------------------
# Segment layout rules
# ---------------------------------------------------------------------------

_LEAD_IN = (1.0, 2.0)
_DIGIT_DUR = (0.30, 0.45)
_GROUP_PAUSE = (1.5, 2.5)      # "a longer pause" between digit groups
_SENTENCE_DUR = (2.5, 4.0)
_SENTENCE_PAUSE = (1.0, 2.0)
_FREE_SPEECH_DUR = (2.0, 6.0)
_FREE_PAUSE = (0.5, 2.0)


def _digit_group_segments(rng, n_groups: int, digits_per_group: int) -> list[Segment]:
    # Digits within a group abut (fluent utterance); groups are separated by
    # a clearly longer pause.
    t = rng.uniform(*_LEAD_IN)
    segments = []
    for g in range(n_groups):
        if g:
            t += rng.uniform(*_GROUP_PAUSE)
        for _ in range(digits_per_group):
            dur = rng.uniform(*_DIGIT_DUR)
            segments.append(Segment(t, t + dur, str(rng.integers(10))))
            t += dur
    return segments


def layout_segments(template: SessionTemplate, rng) -> tuple[list[Segment], float]:
    """Realize a template's speech/pause layout.

    Returns (segments, record_duration_s). The record is at least
    template.duration_s long; content that would overflow extends it.
    """
    if template.kind == "silence":
        return [], template.duration_s

    if template.kind == "credit_card":
        segments = _digit_group_segments(rng, n_groups=2, digits_per_group=16)
    elif template.kind == "pin":
        segments = _digit_group_segments(rng, n_groups=4, digits_per_group=6)
    elif template.kind == "sentences":
        t = rng.uniform(*_LEAD_IN)
        segments = []
        for i in range(5):
            if i:
                t += rng.uniform(*_SENTENCE_PAUSE)
            dur = rng.uniform(*_SENTENCE_DUR)
            segments.append(Segment(t, t + dur))
            t += dur
    elif template.kind == "free_speech":
        # Free speech is not scripted: randomized speech/pause interleaving
        # filling the whole session.
        t = rng.uniform(0.5, 1.5)
        segments = []
        while t < template.duration_s - 1.0:
            dur = min(rng.uniform(*_FREE_SPEECH_DUR), template.duration_s - 0.5 - t)
            if dur < 0.5:
                break
            segments.append(Segment(t, t + dur))
            t += dur + rng.uniform(*_FREE_PAUSE)
        return segments, template.duration_s
    else:  # pragma: no cover - guarded by SessionTemplate validation
        raise ValidationError(f"unknown session kind {template.kind!r}")

    content_end = segments[-1].end_s if segments else 0.0
    duration = max(template.duration_s, content_end + 1.0)
    return segments, duration


# ---------------------------------------------------------------------------
# Subject and session synthesis
# ---------------------------------------------------------------------------


def synth_subject(
    gender: str,
    seed: int,
    speech_coupling: float = DEFAULT_SPEECH_COUPLING,
    subject_id: str | None = None,
) -> SubjectProfile:
    """Draw one subject's physiology, deterministically in (gender, seed).

    Heart rate, beat morphology, drift and sensor noise are sampled from
    plausible resting-state ranges; the female heart-rate distribution sits
    slightly higher so the gender task is not degenerate by construction.
    """
    if gender not in ("male", "female"):
        raise ValidationError(f"gender must be 'male' or 'female', got {gender!r}")
    rng = np.random.default_rng(derive_seed(seed, "subject", gender))
    hr_lo, hr_hi = (1.0, 1.65) if gender == "female" else (0.9, 1.55)
    morphology = PulseMorphology(
        systolic_width=rng.uniform(0.025, 0.050),
        notch_depth=rng.uniform(0.25, 0.55),
        notch_delay=rng.uniform(0.15, 0.30),
        amplitude=rng.uniform(0.8, 1.2),
    )
    return SubjectProfile(
        subject_id=subject_id if subject_id is not None else f"s{seed:04d}",
        gender=gender,
        heart_rate_hz=rng.uniform(hr_lo, hr_hi),
        pulse_morphology=morphology,
        baseline_drift=(rng.uniform(0.05, 0.20), rng.uniform(0.05, 0.30)),
        noise_sigma=rng.uniform(0.010, 0.040),
        speech_coupling=speech_coupling,
    )


def make_cohort(
    n_male: int = 25,
    n_female: int = 6,
    seed: int = 0,
    speech_coupling: float = DEFAULT_SPEECH_COUPLING,
) -> list[SubjectProfile]:
    """Generate a cohort of subject profiles (males first, then females)."""
    if n_male < 0 or n_female < 0:
        raise ValidationError("cohort counts must be non-negative")
    profiles = []
    for i in range(n_male + n_female):
        gender = "male" if i < n_male else "female"
        profiles.append(
            synth_subject(
                gender,
                seed=derive_seed(seed, "cohort", i),
                speech_coupling=speech_coupling,
                subject_id=f"s{i + 1:03d}",
            )
        )
    return profiles


def jitter_timestamps(
    nominal_period_s: float,
    n: int,
    mu_s: float = JITTER_MU_S,
    sigma_s: float = JITTER_SIGMA_S,
    seed: int = 0,
) -> np.ndarray:
    """Sample times of a jittery clock: nominal grid plus Gaussian deviations.

    The first sample is anchored at 0; each later time is i*period plus an
    independent N(mu, sigma) deviation. A deviation large enough to break
    strict monotonicity is resampled (at these defaults, sigma is ~25x
    smaller than the period, so resampling is essentially never exercised).
    """
    if not nominal_period_s > 0:
        raise ValidationError("nominal_period_s must be positive")
    if n < 1:
        raise ValidationError("n must be >= 1")
    if sigma_s < 0:
        raise ValidationError("sigma_s must be >= 0")
    rng = np.random.default_rng(seed)
    times = np.arange(n, dtype=np.float64) * nominal_period_s
    if n == 1:
        return times
    times[1:] += rng.normal(mu_s, sigma_s, n - 1)
    for i in range(1, n):
        while times[i] <= times[i - 1]:
            times[i] = i * nominal_period_s + rng.normal(mu_s, sigma_s)
    return times


def _speech_gate(times: np.ndarray, segments: list[Segment], ramp_s: float = 0.05) -> np.ndarray:
    """Per-sample envelope that is 1 inside speech segments (with short
    cosine-free linear ramps inside the segment edges) and 0 outside."""
    gate = np.zeros_like(times)
    for seg in segments:
        inside = (times >= seg.start_s) & (times < seg.end_s)
        if not inside.any():
            continue
        t = times[inside]
        rise = np.minimum((t - seg.start_s) / ramp_s, 1.0)
        fall = np.minimum((seg.end_s - t) / ramp_s, 1.0)
        gate[inside] = np.minimum(rise, fall)
    return gate


def synth_session(
    profile: SubjectProfile,
    template: SessionTemplate,
    seed: int,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> tuple[PpgRecord, AlignmentTrack]:
    """Synthesize one session: a pulse waveform plus its alignment track.

    The waveform is a quasi-periodic beat train (subject morphology) plus
    slow baseline drift, per-sample clock jitter (resampled back onto the
    uniform grid by linear interpolation), white sensor noise, and a
    band-limited 4-12 Hz perturbation of amplitude ``profile.speech_coupling``
    planted only inside speech segments.
    """
    if template.duration_s < 1.0:
        raise ValidationError(
            f"template duration must be >= 1.0 s, got {template.duration_s}"
        )
    layout_rng = np.random.default_rng(derive_seed(seed, "layout"))
    signal_rng = np.random.default_rng(derive_seed(seed, "signal"))
    speech_rng = np.random.default_rng(derive_seed(seed, "speech"))

    segments, rec_dur = layout_segments(template, layout_rng)
    track = AlignmentTrack(segments=segments, record_duration_s=rec_dur)

    n = int(round(rec_dur * sample_rate_hz))
    grid = np.arange(n, dtype=np.float64) / sample_rate_hz
    times = jitter_timestamps(
        1.0 / sample_rate_hz, n, seed=derive_seed(seed, "jitter")
    )

    m = profile.pulse_morphology
    phase0 = signal_rng.uniform(0.0, 1.0)
    phase = (profile.heart_rate_hz * times + phase0) % 1.0
    pulse = m.amplitude * (
        np.exp(-0.5 * ((phase - _SYSTOLIC_CENTER) / m.systolic_width) ** 2)
        + m.notch_depth
        * np.exp(
            -0.5
            * ((phase - _SYSTOLIC_CENTER - m.notch_delay) / (1.6 * m.systolic_width)) ** 2
        )
    )

    drift_amp, drift_hz = profile.baseline_drift
    drift_phase = signal_rng.uniform(0.0, 2.0 * np.pi)
    drift = drift_amp * np.sin(2.0 * np.pi * drift_hz * times + drift_phase)

    clean = pulse + drift
    if profile.speech_coupling > 0.0 and segments:
        n_tones = 6
        freqs = speech_rng.uniform(4.0, 12.0, n_tones)
        phases = speech_rng.uniform(0.0, 2.0 * np.pi, n_tones)
        amp = profile.speech_coupling * np.sqrt(2.0 / n_tones)  # unit-RMS mix
        mod = (amp * np.sin(2.0 * np.pi * np.outer(times, freqs) + phases)).sum(axis=1)
        clean = clean + mod * _speech_gate(times, segments)

    uniform = np.interp(grid, times, clean)
    samples = uniform + signal_rng.normal(0.0, profile.noise_sigma, n)

    record = PpgRecord(
        subject_id=profile.subject_id,
        session_id=template.kind,
        sample_rate_hz=sample_rate_hz,
        samples=samples,
        gender=profile.gender,
    )
    return record, track


# ---------------------------------------------------------------------------
# On-disk formats
# ---------------------------------------------------------------------------


def _read_json(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    return doc


def _require(doc: dict, field_name: str, path) -> object:
    if field_name not in doc:
        raise FormatError(f"{path}: missing field {field_name!r}")
    return doc[field_name]


def load_ppg_record(path) -> PpgRecord:
    """Load and validate a record file."""
    doc = _read_json(path)
    return PpgRecord(
        subject_id=str(_require(doc, "subject_id", path)),
        session_id=str(_require(doc, "session_id", path)),
        sample_rate_hz=float(_require(doc, "sample_rate_hz", path)),
        samples=_require(doc, "samples", path),
        gender=str(_require(doc, "gender", path)),
    )


def save_ppg_record(path, record: PpgRecord) -> None:
    doc = {
        "subject_id": record.subject_id,
        "session_id": record.session_id,
        "gender": record.gender,
        "sample_rate_hz": record.sample_rate_hz,
        "samples": [float(v) for v in record.samples],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_alignment(path) -> AlignmentTrack:
    """Load and validate an alignment file."""
    doc = _read_json(path)
    raw_segments = _require(doc, "segments", path)
    if not isinstance(raw_segments, list):
        raise FormatError(f"{path}: field 'segments' must be a list")
    segments = []
    for i, seg in enumerate(raw_segments):
        if not isinstance(seg, dict):
            raise FormatError(f"{path}: segments[{i}] must be an object")
        segments.append(
            Segment(
                start_s=float(_require(seg, "start_s", path)),
                end_s=float(_require(seg, "end_s", path)),
                text=seg.get("text"),
            )
        )
    return AlignmentTrack(
        segments=segments,
        record_duration_s=float(_require(doc, "record_duration_s", path)),
    )


def save_alignment(path, track: AlignmentTrack) -> None:
    segments = []
    for seg in track.segments:
        entry = {"start_s": seg.start_s, "end_s": seg.end_s}
        if seg.text is not None:
            entry["text"] = seg.text
        segments.append(entry)
    doc = {"record_duration_s": track.record_duration_s, "segments": segments}
    with open(path, "w") as fh:
        json.dump(doc, fh)
