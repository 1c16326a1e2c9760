"""Audio container and 16-bit PCM mono WAV input/output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DataError(f"expected mono 1-D samples, got shape {samples.shape}")
        if samples.size == 0:
            raise DataError("empty audio clip")
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DataError("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def resampled(self, target_rate: int) -> "AudioClip":
        """Polyphase resample to `target_rate`; identity when rates match."""
        if target_rate == self.sample_rate:
            return self
        g = np.gcd(int(self.sample_rate), int(target_rate))
        out = resample_poly(self.samples, target_rate // g, self.sample_rate // g)
        if out.size == 0:
            raise DataError("resampling produced an empty signal")
        return AudioClip(out, target_rate)


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM WAV file at its native rate."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DataError(f"audio file not found: {path}")
    except ValueError as exc:
        raise DataError(f"unreadable WAV file {path}: {exc}")
    if data.ndim != 1:
        raise DataError(f"expected mono audio in {path}, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"unsupported WAV sample format {data.dtype} in {path}")
    return AudioClip(samples, int(rate))


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as mono 16-bit PCM, clipping amplitudes to [-1, 1]."""
    clipped = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(path, clip.sample_rate, pcm)


def load_clip(path, target_rate: int = SAMPLE_RATE) -> AudioClip:
    """Read a WAV file and resample it to the working rate."""
    return read_wav(path).resampled(target_rate)
