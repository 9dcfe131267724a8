"""Audio frontend: WAV ingestion, STFT, log-mel features, noise injection.

Frames are laid out without center padding: frame ``t`` covers samples
``[t*hop, t*hop + window)``, so ``T = 1 + (len - window) // hop``. The mel
scale is the HTK convention ``2595 * log10(1 + f/700)`` and log amplitudes
are floored at ``eps`` to keep silence finite.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, InputTooShortError, UndefinedSnrError

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class AudioClip:
    """Mono audio at a fixed sample rate, amplitudes as 64-bit floats."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InputError(f"expected mono audio, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelConfig:
    """Feature extraction parameters (defaults are the production setup)."""

    sample_rate: int = DEFAULT_SAMPLE_RATE
    window: int = 2048
    hop: int = 512
    mel_bins: int = 229
    fmin: float = 30.0
    fmax: float = 8000.0
    eps: float = 1e-5

    def __post_init__(self):
        if self.fmin >= self.fmax:
            raise ConfigError(f"fmin ({self.fmin}) must be below fmax ({self.fmax})")
        if self.window % 2 != 0:
            raise ConfigError(f"window must be even, got {self.window}")
        if self.hop < 1:
            raise ConfigError(f"hop must be >= 1, got {self.hop}")
        if self.mel_bins < 1:
            raise ConfigError(f"mel_bins must be >= 1, got {self.mel_bins}")

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop


@dataclass
class MelSpectrogram:
    """T x F matrix of log-mel amplitudes."""

    values: np.ndarray
    frame_rate: float
    mel_bins: int = field(default=0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InputError(f"expected T x F matrix, got shape {self.values.shape}")
        if self.mel_bins == 0:
            self.mel_bins = self.values.shape[1]
        if self.values.shape[1] != self.mel_bins:
            raise ConfigError(
                f"mel_bins={self.mel_bins} but values have {self.values.shape[1]} columns"
            )
        if not np.all(np.isfinite(self.values)):
            raise InputError("mel spectrogram contains non-finite entries")

    @property
    def frames(self) -> int:
        return self.values.shape[0]


def frame_count(n_samples: int, window: int, hop: int) -> int:
    """Number of full analysis windows in a clip of ``n_samples``."""
    if n_samples < window:
        raise InputTooShortError(
            f"clip of {n_samples} samples is shorter than one window ({window})"
        )
    return 1 + (n_samples - window) // hop


def hann_window(n: int) -> np.ndarray:
    # Periodic Hann, the common analysis-window convention.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, window_len: int = 2048, hop: int = 512) -> np.ndarray:
    """Windowed DFT of every frame; returns a complex T x (window/2 + 1) matrix."""
    if window_len % 2 != 0:
        raise ConfigError(f"window_len must be even, got {window_len}")
    if hop < 1:
        raise ConfigError(f"hop must be >= 1, got {hop}")
    x = clip.samples
    t = frame_count(len(x), window_len, hop)
    idx = np.arange(window_len)[None, :] + hop * np.arange(t)[:, None]
    frames = x[idx] * hann_window(window_len)[None, :]
    return np.fft.rfft(frames, axis=1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular unit-peak filters over rfft bins; shape [mel_bins, window/2+1]."""
    n_freqs = cfg.window // 2 + 1
    freqs = np.arange(n_freqs) * (cfg.sample_rate / cfg.window)
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    fb = np.zeros((cfg.mel_bins, n_freqs))
    for m in range(cfg.mel_bins):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_bins + 2))
    return edges[1:-1]


def melspectrogram(clip: AudioClip, cfg: MelConfig | None = None) -> MelSpectrogram:
    """Log-amplitude mel spectrogram of a clip."""
    cfg = cfg or MelConfig()
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"clip sample rate {clip.sample_rate} != configured {cfg.sample_rate}"
        )
    mag = np.abs(stft(clip, cfg.window, cfg.hop))
    mel = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(np.log(mel + cfg.eps), cfg.frame_rate, cfg.mel_bins)


def add_white_noise(
    clip: AudioClip, snr_db: float, rng: np.random.Generator | None = None
) -> AudioClip:
    """Add Gaussian noise scaled for an exact signal-to-noise ratio in dB.

    ``snr_db=inf`` returns the clip unchanged. The drawn noise is rescaled to
    its measured power, so the realized SNR matches the target exactly.
    """
    if snr_db == math.inf:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    if not math.isfinite(snr_db):
        raise ConfigError(f"snr_db must be finite or +inf, got {snr_db}")
    p_signal = float(np.mean(clip.samples**2))
    if p_signal == 0.0:
        raise UndefinedSnrError("SNR is undefined for an all-zero clip")
    rng = rng or np.random.default_rng()
    noise = rng.standard_normal(len(clip.samples))
    p_target = p_signal / (10.0 ** (snr_db / 10.0))
    noise *= math.sqrt(p_target / float(np.mean(noise**2)))
    return AudioClip(clip.samples + noise, clip.sample_rate)


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM RIFF/WAVE file."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise InputError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise InputError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        raw = wf.readframes(wf.getnframes())
        rate = wf.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip) -> None:
    """Write a mono 16-bit PCM RIFF/WAVE file (amplitudes clipped to [-1, 1])."""
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.tobytes())


def save_mel(path, mel: MelSpectrogram) -> None:
    """Serialize as an 8-byte (T, F as u32 LE) header plus float32 LE values."""
    t, f = mel.values.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", t, f))
        fh.write(mel.values.astype("<f4").tobytes())


def load_mel(path, frame_rate: float = DEFAULT_SAMPLE_RATE / 512) -> MelSpectrogram:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise InputError(f"{path}: truncated mel header")
        t, f = struct.unpack("<II", header)
        data = np.frombuffer(fh.read(4 * t * f), dtype="<f4")
    if data.size != t * f:
        raise InputError(f"{path}: truncated mel payload")
    return MelSpectrogram(data.reshape(t, f).astype(np.float64), frame_rate, f)
