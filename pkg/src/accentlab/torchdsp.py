"""Differentiable mel/MFCC front end mirroring `features` bit-for-bit.

The numpy extractors in `features` are the canonical definition; the
modules here reproduce them with torch ops so reconstruction and accent
feedback losses can backpropagate into generated waveforms. Equality with
the numpy path is covered by tests.
"""

from __future__ import annotations

import numpy as np
import torch
from scipy.fft import dct

from .features import MelConfig, mel_filterbank


class TorchMel(torch.nn.Module):
    """Log mel spectrogram of a (B, N) or (N,) waveform batch."""

    def __init__(self, config: MelConfig = MelConfig(), dtype=torch.float32):
        super().__init__()
        self.config = config
        window = np.hanning(config.window_samples)
        self.register_buffer("window", torch.as_tensor(window, dtype=dtype))
        bank = mel_filterbank(config).T  # (n_bins, n_mels)
        self.register_buffer("bank", torch.as_tensor(bank, dtype=dtype))

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        squeeze = wave.dim() == 1
        if squeeze:
            wave = wave[None, :]
        frames = wave.unfold(1, self.config.window_samples, self.config.shift_samples)
        spectrum = torch.fft.rfft(frames * self.window, n=self.config.n_fft, dim=-1)
        power = spectrum.real ** 2 + spectrum.imag ** 2
        energies = power @ self.bank
        out = torch.log(torch.clamp(energies, min=self.config.energy_floor))
        return out[0] if squeeze else out


class TorchMfcc(torch.nn.Module):
    """13 cepstra + regression deltas of a log mel batch, (B, T, 39)."""

    def __init__(self, config: MelConfig = MelConfig(), num_ceps: int = 13,
                 dtype=torch.float32):
        super().__init__()
        self.mel = TorchMel(config, dtype=dtype)
        basis = dct(np.eye(config.n_mels), type=2, norm="ortho", axis=0)[:num_ceps]
        self.register_buffer("dct_basis", torch.as_tensor(basis.T, dtype=dtype))

    @staticmethod
    def deltas(feats: torch.Tensor, window: int = 2) -> torch.Tensor:
        # feats: (B, T, C); replicate edges, +-window regression.
        denom = 2.0 * sum(n * n for n in range(1, window + 1))
        padded = torch.cat(
            [feats[:, :1].expand(-1, window, -1), feats,
             feats[:, -1:].expand(-1, window, -1)], dim=1)
        num = torch.zeros_like(feats)
        t = feats.shape[1]
        for n in range(1, window + 1):
            num = num + n * (padded[:, window + n:window + n + t]
                             - padded[:, window - n:window - n + t])
        return num / denom

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        squeeze = wave.dim() == 1
        mel = self.mel(wave[None, :] if squeeze else wave)
        ceps = mel @ self.dct_basis
        d1 = self.deltas(ceps)
        d2 = self.deltas(d1)
        out = torch.cat([ceps, d1, d2], dim=-1)
        return out[0] if squeeze else out
