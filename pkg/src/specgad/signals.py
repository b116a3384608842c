"""Acoustic signal loading, synthesis, decimation, and windowing."""

import csv
import io
import math
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

NORMAL = "normal"
ANOMALOUS = "anomalous"

ANOMALY_KINDS = ("harmonic_burst", "broadband_burst", "amplitude_step")


@dataclass
class Signal:
    """A sampled real-valued waveform.

    samples: amplitudes, nominally within [-1, 1]
    sample_rate: Hz
    label: "normal" / "anomalous" / None
    source_id: provenance tag (file stem or synthesis name)
    """

    samples: np.ndarray
    sample_rate: float
    label: Optional[str] = None
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.isfinite(self.samples).all():
            raise ValueError("samples contain NaN or Inf")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.label is not None and self.label not in (NORMAL, ANOMALOUS):
            raise ValueError(f"unknown label {self.label!r}")

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class WindowSpec:
    window_size: int
    step_size: int

    def __post_init__(self):
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")
        if self.step_size < 1:
            raise ValueError("step_size must be >= 1")


@dataclass
class WindowSet:
    """Fixed-length sub-sequences cut from one or more signals.

    windows is a (k, L) array; labels/source_ids/indices run parallel to
    its rows so every window keeps its provenance through scoring.
    """

    windows: np.ndarray
    spec: WindowSpec
    labels: list = field(default_factory=list)
    source_ids: list = field(default_factory=list)
    indices: list = field(default_factory=list)

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        if self.windows.ndim != 2:
            raise ValueError("windows must be a 2-D (count, length) array")
        if self.windows.shape[1] != self.spec.window_size:
            raise ValueError("window length does not match spec")

    @property
    def count(self) -> int:
        return self.windows.shape[0]


def window_count(n_samples: int, spec: WindowSpec) -> int:
    """Number of full windows: floor((M - s_w)/s_s) + 1."""
    if n_samples < spec.window_size:
        return 0
    return (n_samples - spec.window_size) // spec.step_size + 1


def sliding_window(signal: Signal, spec: WindowSpec) -> WindowSet:
    """Cut a signal into full windows; trailing partial samples are dropped."""
    m = len(signal)
    if m < spec.window_size:
        raise ValueError(
            f"signal shorter than window ({m} < {spec.window_size})"
        )
    k = window_count(m, spec)
    offsets = np.arange(k) * spec.step_size
    rows = np.stack([signal.samples[o : o + spec.window_size] for o in offsets])
    return WindowSet(
        windows=rows,
        spec=spec,
        labels=[signal.label] * k,
        source_ids=[signal.source_id] * k,
        indices=list(range(k)),
    )


def window_signals(signals, spec: WindowSpec) -> WindowSet:
    """Window several signals into one WindowSet, preserving order."""
    parts = [sliding_window(s, spec) for s in signals]
    if not parts:
        return WindowSet(
            windows=np.empty((0, spec.window_size)), spec=spec
        )
    return WindowSet(
        windows=np.concatenate([p.windows for p in parts]),
        spec=spec,
        labels=sum((p.labels for p in parts), []),
        source_ids=sum((p.source_ids for p in parts), []),
        indices=sum((p.indices for p in parts), []),
    )


def normalize_window(w) -> np.ndarray:
    """Per-window z-score: (w - mean) / (std + 1e-8).

    Constant windows map to zeros. std is the population standard
    deviation (ddof=0).
    """
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("empty window")
    if not np.isfinite(w).all():
        raise ValueError("window contains NaN or Inf")
    return (w - w.mean(axis=-1, keepdims=True)) / (
        w.std(axis=-1, keepdims=True) + 1e-8
    )


def normalize_windows(ws: WindowSet) -> WindowSet:
    """Apply normalize_window to every row of a WindowSet."""
    return WindowSet(
        windows=normalize_window(ws.windows),
        spec=ws.spec,
        labels=list(ws.labels),
        source_ids=list(ws.source_ids),
        indices=list(ws.indices),
    )


def decimate(signal: Signal, factor: int) -> Signal:
    """Keep every factor-th sample (naive dropping, no anti-alias filter)."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor >= len(signal):
        raise ValueError("factor must be smaller than the signal length")
    return Signal(
        samples=signal.samples[::factor].copy(),
        sample_rate=signal.sample_rate / factor,
        label=signal.label,
        source_id=signal.source_id,
    )


# ---------------------------------------------------------------------------
# Synthetic dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale synthetic acoustic data.

    Normal signals are a stationary three-tone mixture plus Gaussian noise
    at snr_db. Anomalous signals add a perturbation on top:
      harmonic_burst  - odd harmonics of a burst fundamental over 25% of
                        the signal (new spectral lines, not just louder)
      broadband_burst - white noise burst over 25% of the signal
      amplitude_step  - gain step from a change point to the end
    """

    n_normal: int = 10
    n_anomalous: int = 10
    signal_len: int = 4096
    sample_rate: float = 8000.0
    snr_db: float = 6.0
    anomaly_kind: str = "harmonic_burst"
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_normal < 0 or self.n_anomalous < 0:
            raise ValueError("signal counts must be non-negative")
        if self.signal_len < 2:
            raise ValueError("signal_len must be >= 2")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly_kind {self.anomaly_kind!r}")


# Normal tone frequencies / amplitudes as fractions of the sample rate.
_BASE_TONES = ((0.050, 1.00), (0.113, 0.55), (0.230, 0.30))
# Burst fundamental; odd harmonics 1/3/5 stay below Nyquist.
_BURST_FUND = 0.081
_BURST_AMPS = (0.90, 0.55, 0.35)
_BURST_FRACTION = 0.25
_STEP_GAIN = 1.8
_PEAK = 0.95


def _tone_mix(n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n)
    clean = np.zeros(n)
    for frac, amp in _BASE_TONES:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        jitter = rng.uniform(0.9, 1.1)
        clean += amp * jitter * np.sin(2.0 * np.pi * frac * t + phase)
    return clean


def _synth_one(cfg: SynthConfig, rng: np.random.Generator, anomalous: bool,
               index: int) -> Signal:
    n = cfg.signal_len
    clean = _tone_mix(n, rng)
    p_clean = float(np.mean(clean**2))
    p_noise = p_clean / (10.0 ** (cfg.snr_db / 10.0))
    x = clean + rng.normal(0.0, math.sqrt(p_noise), n)

    if anomalous:
        seg = max(1, int(n * _BURST_FRACTION))
        start = int(rng.integers(0, n - seg + 1))
        if cfg.anomaly_kind == "harmonic_burst":
            t = np.arange(start, start + seg)
            for mult, amp in zip((1, 3, 5), _BURST_AMPS):
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x[start : start + seg] += amp * np.sin(
                    2.0 * np.pi * _BURST_FUND * mult * t + phase
                )
        elif cfg.anomaly_kind == "broadband_burst":
            x[start : start + seg] += rng.normal(
                0.0, math.sqrt(p_clean), seg
            )
        else:  # amplitude_step
            x[start:] *= _STEP_GAIN

    x *= _PEAK / np.abs(x).max()
    label = ANOMALOUS if anomalous else NORMAL
    return Signal(
        samples=x,
        sample_rate=cfg.sample_rate,
        label=label,
        source_id=f"{label}_{index:04d}",
    )


def synth_dataset(cfg: SynthConfig) -> list:
    """Generate n_normal normal then n_anomalous anomalous signals.

    Pure function of the config: identical configs yield identical bytes.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    out = [_synth_one(cfg, rng, False, i) for i in range(cfg.n_normal)]
    out += [_synth_one(cfg, rng, True, i) for i in range(cfg.n_anomalous)]
    return out


# ---------------------------------------------------------------------------
# File I/O: CSV and 16-bit mono PCM WAV
# ---------------------------------------------------------------------------

def load_signal(path, format: str, sample_rate: Optional[float] = None,
                label: Optional[str] = None) -> Signal:
    """Load a signal from disk.

    format "csv": comma- and/or newline-separated decimal floats, taken
    verbatim; sample_rate must be supplied. format "wav_pcm16_mono":
    RIFF PCM 16-bit single channel; amplitudes are divided by 32768 and
    the rate comes from the header.
    """
    path = Path(path)
    if format == "csv":
        if sample_rate is None:
            raise ValueError("CSV input requires an explicit sample_rate")
        text = path.read_text(encoding="utf-8")
        tokens = [t for t in text.replace(",", "\n").split() if t]
        if not tokens:
            raise ValueError(f"empty sample payload in {path}")
        samples = np.array([float(t) for t in tokens])
        return Signal(samples, sample_rate, label=label, source_id=path.stem)
    if format == "wav_pcm16_mono":
        try:
            with wave.open(str(path), "rb") as wf:
                if wf.getnchannels() != 1:
                    raise ValueError(f"{path}: only mono WAV is supported")
                if wf.getsampwidth() != 2 or wf.getcomptype() != "NONE":
                    raise ValueError(f"{path}: only 16-bit PCM is supported")
                rate = wf.getframerate()
                raw = wf.readframes(wf.getnframes())
        except wave.Error as exc:
            raise ValueError(f"{path}: malformed WAV header ({exc})") from exc
        if not raw:
            raise ValueError(f"empty sample payload in {path}")
        pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
        return Signal(pcm / 32768.0, float(rate), label=label,
                      source_id=path.stem)
    raise ValueError(f"unknown format {format!r}")


def write_wav(path, signal: Signal) -> None:
    """Write 16-bit mono PCM; amplitudes are clipped to the PCM16 range."""
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(round(signal.sample_rate)))
        wf.writeframes(pcm.astype("<i2").tobytes())


def write_csv(path, signal: Signal) -> None:
    """Write one amplitude per line, full double precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for v in signal.samples:
        w.writerow([repr(float(v))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
