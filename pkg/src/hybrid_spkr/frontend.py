"""Audio front-end: 16->8 kHz decimation, pre-emphasis, Hamming framing, LPC and LPCC.

All functions are pure. Feature sequences are returned as ``(n_frames, p)``
float64 arrays, one LPCC vector per row.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import (
    MalformedWavError,
    MissingFileError,
    RateMismatchError,
    TooShortError,
    UnsupportedRateError,
    ValidationError,
    ZeroEnergyError,
)

TARGET_RATE = 8000
SUPPORTED_RATES = (8000, 16000)

# 63-tap windowed-sinc anti-alias filter for the 16 kHz -> 8 kHz path
_DECIMATOR_TAPS = 63
_DECIMATOR_CUTOFF_HZ = 3600.0

# relative diagonal loading of R(0) before Levinson-Durbin
AUTOCORR_REG = 1e-9


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValidationError("AudioClip samples must be one-dimensional (mono)")
        if s.size == 0:
            raise ValidationError("AudioClip samples are empty")
        if self.sample_rate_hz <= 0:
            raise ValidationError(f"invalid sample rate {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class FrontendConfig:
    preemphasis_coeff: float = 0.95
    frame_len_ms: float = 30.0
    overlap_fraction: float = 2.0 / 3.0
    lpc_order: int = 12

    def __post_init__(self):
        if not 0.0 <= self.preemphasis_coeff < 1.0:
            raise ValidationError("preemphasis_coeff must lie in [0, 1)")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValidationError("overlap_fraction must lie in [0, 1)")
        if self.lpc_order < 1:
            raise ValidationError("lpc_order must be >= 1")
        if self.frame_length < 2 or self.lpc_order >= self.frame_length:
            raise ValidationError("frame too short for the requested LPC order")

    @property
    def frame_length(self) -> int:
        return int(round(self.frame_len_ms / 1000.0 * TARGET_RATE))

    @property
    def frame_shift(self) -> int:
        return max(1, int(round(self.frame_length * (1.0 - self.overlap_fraction))))


def decimator_taps() -> np.ndarray:
    return signal.firwin(_DECIMATOR_TAPS, _DECIMATOR_CUTOFF_HZ, fs=16000.0)


def resample_16k_to_8k(clip: AudioClip) -> AudioClip:
    """Low-pass at 3.6 kHz, then keep every second sample.

    The FIR is applied with its group delay removed so output sample ``m``
    lines up with input sample ``2m``; output length is ``ceil(len / 2)``.
    """
    if clip.sample_rate_hz != 16000:
        raise RateMismatchError(f"expected a 16000 Hz clip, got {clip.sample_rate_hz} Hz")
    h = decimator_taps()
    delay = (h.size - 1) // 2
    filtered = np.convolve(clip.samples, h)[delay:delay + clip.samples.size]
    return AudioClip(filtered[::2].copy(), TARGET_RATE)


def preemphasize(clip: AudioClip, coeff: float = 0.95) -> AudioClip:
    x = clip.samples
    y = x.copy()
    y[1:] -= coeff * x[:-1]
    return AudioClip(y, clip.sample_rate_hz)


def frame_signal(clip: AudioClip, cfg: FrontendConfig | None = None) -> np.ndarray:
    """Split into Hamming-windowed frames, shape ``(n_frames, frame_length)``."""
    cfg = cfg or FrontendConfig()
    n, shift = cfg.frame_length, cfg.frame_shift
    x = clip.samples
    if x.size < n:
        raise TooShortError(f"clip has {x.size} samples, one frame needs {n}")
    n_frames = (x.size - n) // shift + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[::shift][:n_frames]
    return frames * np.hamming(n)


def autocorrelation(frame: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(frame, dtype=np.float64)
    n = x.size
    return np.array([np.dot(x[: n - k], x[k:]) for k in range(max_lag + 1)])


def levinson_durbin(r: np.ndarray, p: int):
    """Solve the order-``p`` normal equations for autocorrelation ``r``.

    Returns ``(a, err, refl)`` where ``a[k-1]`` multiplies ``x[n-k]`` in the
    prediction ``x_hat[n] = sum_k a_k x[n-k]``, ``err`` is the final
    prediction-error power and ``refl`` holds the reflection coefficients.
    """
    r = np.asarray(r, dtype=np.float64)
    if r[0] <= 0.0:
        raise ZeroEnergyError("R(0) is zero; frame has no energy")
    a = np.zeros(p)
    refl = np.zeros(p)
    err = r[0]
    for i in range(p):
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        k = acc / err
        refl[i] = k
        prev = a[:i].copy()
        a[:i] = prev - k * prev[::-1]
        a[i] = k
        err *= 1.0 - k * k
        if err <= 0.0:
            # perfectly predictable: remaining coefficients stay zero
            break
    return a, err, refl


def lpc_analyze(frame: np.ndarray, p: int = 12) -> np.ndarray:
    """Autocorrelation-method LPC of one (already windowed) frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValidationError("empty frame")
    if p >= frame.size:
        raise ValidationError(f"LPC order {p} must be below frame length {frame.size}")
    r = autocorrelation(frame, p)
    if r[0] == 0.0:
        raise ZeroEnergyError("zero-energy frame")
    r[0] *= 1.0 + AUTOCORR_REG
    a, _, _ = levinson_durbin(r, p)
    return a


def lpc_to_cepstrum(a: np.ndarray, p: int | None = None) -> np.ndarray:
    """Cepstrum of the all-pole model: c_n = a_n + sum_{k<n} (k/n) c_k a_{n-k}."""
    a = np.asarray(a, dtype=np.float64)
    p = a.size if p is None else p
    if a.size != p:
        raise ValidationError(f"expected {p} LPC coefficients, got {a.size}")
    c = np.zeros(p)
    for n in range(1, p + 1):
        acc = a[n - 1]
        for k in range(1, n):
            acc += (k / n) * c[k - 1] * a[n - k - 1]
        c[n - 1] = acc
    return c


def extract_lpcc(clip: AudioClip, cfg: FrontendConfig | None = None, diagnostics: dict | None = None) -> np.ndarray:
    """Full pipeline: clip -> ``(n_frames, p)`` LPCC matrix.

    Zero-energy frames yield an all-zero row; their count is added to
    ``diagnostics["zero_energy_frames"]`` when a dict is supplied.
    """
    cfg = cfg or FrontendConfig()
    if clip.sample_rate_hz == 16000:
        clip = resample_16k_to_8k(clip)
    elif clip.sample_rate_hz != TARGET_RATE:
        raise RateMismatchError(f"unsupported sample rate {clip.sample_rate_hz}")
    clip = preemphasize(clip, cfg.preemphasis_coeff)
    frames = frame_signal(clip, cfg)
    p = cfg.lpc_order
    out = np.zeros((frames.shape[0], p))
    zero = 0
    for i, fr in enumerate(frames):
        try:
            out[i] = lpc_to_cepstrum(lpc_analyze(fr, p), p)
        except ZeroEnergyError:
            zero += 1
    if diagnostics is not None:
        diagnostics["zero_energy_frames"] = diagnostics.get("zero_energy_frames", 0) + zero
    return out


# --- WAV and CSV I/O -------------------------------------------------------


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM WAV at 8 or 16 kHz; samples scaled by 1/32768."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    try:
        with wave.open(str(path), "rb") as w:
            n_channels, width, rate, n_frames = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            raw = w.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise MalformedWavError(f"{path}: {exc}") from exc
    if n_channels != 1 or width != 2:
        raise MalformedWavError(f"{path}: need mono 16-bit PCM, got {n_channels} channel(s) of {8 * width} bits")
    if rate not in SUPPORTED_RATES:
        raise UnsupportedRateError(f"{path}: sample rate {rate} Hz not in {SUPPORTED_RATES}")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise MalformedWavError(f"{path}: no audio frames")
    return AudioClip(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate_hz)
        w.writeframes(pcm.tobytes())


def write_lpcc_csv(path, lpcc: np.ndarray) -> None:
    lpcc = np.atleast_2d(lpcc)
    header = ",".join(f"c{i + 1}" for i in range(lpcc.shape[1]))
    lines = [header] + [",".join(repr(float(v)) for v in row) for row in lpcc]
    Path(path).write_text("\n".join(lines) + "\n")


def read_lpcc_csv(path) -> np.ndarray:
    rows = Path(path).read_text().strip().splitlines()[1:]
    return np.array([[float(v) for v in row.split(",")] for row in rows])


def n_frames_for(n_samples: int, cfg: FrontendConfig | None = None) -> int:
    cfg = cfg or FrontendConfig()
    if n_samples < cfg.frame_length:
        return 0
    return (n_samples - cfg.frame_length) // cfg.frame_shift + 1
