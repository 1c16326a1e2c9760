"""Deterministic signal-processing front end.

Mel spectrograms (80 bands, 10 ms shift), MFCCs with first/second-order
regression deltas, and time/frequency masking augmentation. All feature
extractors are pure functions: same input and config give bit-identical
output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .audio import AudioClip
from .errors import DataError

FEATURE_FILE_MAGIC = b"ALFM"


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 16000
    n_mels: int = 80
    window_ms: float = 25.0
    shift_ms: float = 10.0
    n_fft: int = 512
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0
    energy_floor: float = 1e-5

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def shift_samples(self) -> int:
        return int(round(self.sample_rate * self.shift_ms / 1000.0))


@dataclass(frozen=True)
class MelSpectrogram:
    """T x n_mels matrix of log mel energies."""

    frames: np.ndarray
    frame_shift_ms: float = 10.0
    frame_length_ms: float = 25.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise DataError(f"mel frames must be 2-D, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise DataError("mel spectrogram contains non-finite entries")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class MfccMatrix:
    """T x 39 matrix: 13 cepstra, 13 deltas, 13 delta-deltas."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != 39:
            raise DataError(f"MFCC matrix must be T x 39, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise DataError("MFCC matrix contains non-finite entries")
        object.__setattr__(self, "frames", frames)


@dataclass(frozen=True)
class AugmentPolicy:
    """Masking policy: widths are sampled uniformly in [0, max]."""

    max_time_mask_frames: int = 0
    num_time_masks: int = 0
    max_freq_mask_bands: int = 0
    num_freq_masks: int = 0
    mask_value: float = 0.0

    def __post_init__(self):
        for name in ("max_time_mask_frames", "num_time_masks",
                     "max_freq_mask_bands", "num_freq_masks"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be >= 0")


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(config: MelConfig = MelConfig()) -> np.ndarray:
    """Center frequency (Hz) of each triangular mel filter."""
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin_hz),
                                  hz_to_mel(config.fmax_hz),
                                  config.n_mels + 2))
    return edges[1:-1]


def mel_filterbank(config: MelConfig = MelConfig()) -> np.ndarray:
    """Unit-peak triangular filterbank, shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin_hz),
                                  hz_to_mel(config.fmax_hz),
                                  config.n_mels + 2))
    bin_freqs = np.arange(config.n_fft // 2 + 1) * config.sample_rate / config.n_fft
    bank = np.zeros((config.n_mels, bin_freqs.size))
    for i in range(config.n_mels):
        lower, center, upper = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - lower) / max(center - lower, 1e-12)
        falling = (upper - bin_freqs) / max(upper - center, 1e-12)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def frame_count(num_samples: int, config: MelConfig = MelConfig()) -> int:
    """Frames under the no-padding policy (trailing partial window dropped)."""
    window, shift = config.window_samples, config.shift_samples
    if num_samples < window:
        return 0
    return (num_samples - window) // shift + 1


def _frame_signal(samples: np.ndarray, config: MelConfig) -> np.ndarray:
    window, shift = config.window_samples, config.shift_samples
    num_frames = frame_count(len(samples), config)
    if num_frames == 0:
        raise DataError(
            f"clip of {len(samples)} samples is shorter than one "
            f"{window}-sample analysis window")
    idx = np.arange(window)[None, :] + shift * np.arange(num_frames)[:, None]
    return samples[idx]


def mel_spectrogram(clip: AudioClip, config: MelConfig = MelConfig()) -> MelSpectrogram:
    """80-band log mel spectrogram with a 10 ms frame shift."""
    if clip.sample_rate != config.sample_rate:
        raise DataError(
            f"clip rate {clip.sample_rate} != config rate {config.sample_rate}; "
            "resample on ingest")
    frames = _frame_signal(clip.samples, config) * np.hanning(config.window_samples)
    power = np.abs(np.fft.rfft(frames, n=config.n_fft, axis=1)) ** 2
    energies = power @ mel_filterbank(config).T
    log_mel = np.log(np.maximum(energies, config.energy_floor))
    return MelSpectrogram(log_mel, config.shift_ms, config.window_ms)


def delta_features(frames: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression deltas over +-window frames with replicated edges."""
    frames = np.asarray(frames, dtype=np.float64)
    num = np.zeros_like(frames)
    denom = 2.0 * sum(n * n for n in range(1, window + 1))
    t_idx = np.arange(frames.shape[0])
    for n in range(1, window + 1):
        ahead = frames[np.minimum(t_idx + n, frames.shape[0] - 1)]
        behind = frames[np.maximum(t_idx - n, 0)]
        num += n * (ahead - behind)
    return num / denom


def mfcc_with_deltas(clip: AudioClip, config: MelConfig = MelConfig(),
                     num_ceps: int = 13) -> MfccMatrix:
    """13 MFCCs (DCT-II of the log mel bands) plus delta and delta-delta."""
    mel = mel_spectrogram(clip, config)
    ceps = dct(mel.frames, type=2, norm="ortho", axis=1)[:, :num_ceps]
    d1 = delta_features(ceps)
    d2 = delta_features(d1)
    return MfccMatrix(np.concatenate([ceps, d1, d2], axis=1))


def sample_masks(shape: tuple[int, int], policy: AugmentPolicy,
                 rng: np.random.Generator) -> list[tuple[str, int, int]]:
    """Draw mask rectangles as (axis, start, width); widths clamp to extents."""
    num_frames, num_bands = shape
    masks = []
    for _ in range(policy.num_time_masks):
        width = int(rng.integers(0, min(policy.max_time_mask_frames, num_frames) + 1))
        start = int(rng.integers(0, num_frames - width + 1))
        masks.append(("time", start, width))
    for _ in range(policy.num_freq_masks):
        width = int(rng.integers(0, min(policy.max_freq_mask_bands, num_bands) + 1))
        start = int(rng.integers(0, num_bands - width + 1))
        masks.append(("freq", start, width))
    return masks


def apply_masks(frames: np.ndarray, masks: list[tuple[str, int, int]],
                mask_value: float) -> np.ndarray:
    out = np.array(frames, dtype=np.float64, copy=True)
    for axis, start, width in masks:
        if axis == "time":
            out[start:start + width, :] = mask_value
        elif axis == "freq":
            out[:, start:start + width] = mask_value
        else:
            raise DataError(f"unknown mask axis {axis!r}")
    return out


def spec_augment(mel: MelSpectrogram, policy: AugmentPolicy,
                 rng: np.random.Generator) -> MelSpectrogram:
    """Mask random time spans and frequency bands; unmasked entries unchanged."""
    masks = sample_masks(mel.frames.shape, policy, rng)
    return MelSpectrogram(apply_masks(mel.frames, masks, policy.mask_value),
                          mel.frame_shift_ms, mel.frame_length_ms)


def save_matrix(path, matrix: np.ndarray) -> None:
    """Write a row-major binary matrix with a self-describing header."""
    matrix = np.ascontiguousarray(matrix)
    header = json.dumps({"dtype": matrix.dtype.str, "shape": list(matrix.shape)},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FEATURE_FILE_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(matrix.tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_FILE_MAGIC:
            raise DataError(f"{path} is not a feature matrix file")
        header_len = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        data = fh.read()
    return np.frombuffer(data, dtype=np.dtype(header["dtype"])).reshape(header["shape"]).copy()
