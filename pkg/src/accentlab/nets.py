"""Trainable networks: acoustic encoder, content-code builder, waveform
generator, critics (realism, accent-on-features, accent transformer),
two phone recognizers, and the accent-representation head.

All modules operate on batch-first tensors. Frame-rate contracts: the
acoustic encoder emits ceil(samples / stride_product) frames; the
generator emits frames x upsample_product samples; the waveform phone
recognizer downsamples by its own stride product.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import AudioClip
from .errors import DataError
from .phones import PhoneInventory, PhoneSeq


@dataclass(frozen=True)
class ModelConfig:
    num_accents: int = 3
    char_alphabet: str = " abcdefghijklmnopqrstuvwxyz"
    accent_embed_dim: int = 16
    acoustic_dim: int = 128
    acoustic_strides: tuple[int, ...] = (5, 4, 4, 2)
    acoustic_channels: tuple[int, ...] = (32, 64, 96)
    generator_upsample: tuple[int, ...] = (8, 5, 4)
    generator_channels: int = 64
    disc_channels: tuple[int, ...] = (16, 32, 64, 64)
    at_channels: int = 96
    at_layers: int = 10
    at_heads: int = 4
    at_ff_dim: int = 384
    at_dropout: float = 0.1
    content_dim: int = 64
    content_layers: int = 10
    content_heads: int = 4
    content_ff_dim: int = 128
    wave_rec_strides: tuple[int, ...] = (5, 4, 4, 4)
    wave_rec_dim: int = 64
    wave_rec_layers: int = 4
    wave_rec_heads: int = 4
    wave_rec_ff_dim: int = 128
    num_phones: int = 51
    repr_dim: int = 32

    def __post_init__(self):
        object.__setattr__(self, "acoustic_strides", tuple(self.acoustic_strides))
        object.__setattr__(self, "acoustic_channels", tuple(self.acoustic_channels))
        object.__setattr__(self, "generator_upsample", tuple(self.generator_upsample))
        object.__setattr__(self, "disc_channels", tuple(self.disc_channels))
        object.__setattr__(self, "wave_rec_strides", tuple(self.wave_rec_strides))
        if self.num_accents < 2:
            raise DataError("num_accents must be >= 2")
        if len(set(self.char_alphabet)) != len(self.char_alphabet):
            raise DataError("char_alphabet must not repeat symbols")
        for name in ("accent_embed_dim", "acoustic_dim", "generator_channels",
                     "at_channels", "content_dim", "wave_rec_dim", "num_phones",
                     "repr_dim"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if math.prod(self.generator_upsample) != math.prod(self.acoustic_strides):
            raise DataError(
                "generator upsample product must match the acoustic frame shift "
                f"({math.prod(self.generator_upsample)} vs "
                f"{math.prod(self.acoustic_strides)})")

    @property
    def alphabet_size(self) -> int:
        return len(self.char_alphabet)

    @property
    def content_width(self) -> int:
        return self.alphabet_size + self.accent_embed_dim

    @property
    def frame_stride(self) -> int:
        return math.prod(self.acoustic_strides)

    def char_id(self, ch: str) -> int:
        idx = self.char_alphabet.find(ch)
        if idx < 0:
            raise DataError(f"character {ch!r} not in the model alphabet")
        return idx

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "ModelConfig":
        record = json.loads(payload)
        for f in fields(cls):
            if f.name in record and isinstance(record[f.name], list):
                record[f.name] = tuple(record[f.name])
        return cls(**record)


def ceil_div(n: int, d: int) -> int:
    return -(-n // d)


def strided_frame_count(num_samples: int, strides: tuple[int, ...]) -> int:
    """Output length of the center-padded strided conv chain."""
    out = num_samples
    for s in strides:
        out = ceil_div(out, s)
    return out


class _StridedConv(nn.Module):
    """Conv1d emitting exactly ceil(L / stride) frames."""

    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.stride = stride
        self.conv = nn.Conv1d(in_ch, out_ch, kernel_size=3 * stride,
                              stride=stride, padding=stride)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pad = (-x.shape[-1]) % self.stride
        if pad:
            x = F.pad(x, (0, pad))
        return self.conv(x)


class AcousticEncoder(nn.Module):
    """Waveform to learned acoustic features at the mel frame rate."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        channels = [1, *config.acoustic_channels]
        while len(channels) < len(config.acoustic_strides):
            channels.append(channels[-1])
        channels = channels[:len(config.acoustic_strides)] + [config.acoustic_dim]
        layers = []
        for i, stride in enumerate(config.acoustic_strides):
            layers.append(_StridedConv(channels[i], channels[i + 1], stride))
            if i < len(config.acoustic_strides) - 1:
                layers.append(nn.GroupNorm(1, channels[i + 1]))
                layers.append(nn.ELU())
        self.net = nn.Sequential(*layers)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        # wave: (B, N) -> (B, T, D_a) with T = ceil(N / stride_product)
        return self.net(wave[:, None, :]).transpose(1, 2)


class ContentCodeBuilder(nn.Module):
    """Per-frame character one-hot concatenated with a learned accent embedding."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.num_accents, config.accent_embed_dim)

    def forward(self, char_ids: torch.Tensor, accent_ids: torch.Tensor) -> torch.Tensor:
        # char_ids: (B, T) long; accent_ids: (B,) long -> (B, T, C + E)
        if char_ids.min() < 0 or char_ids.max() >= self.config.alphabet_size:
            raise DataError("character id outside the alphabet")
        if accent_ids.min() < 0 or accent_ids.max() >= self.config.num_accents:
            raise DataError("accent id outside configured range")
        one_hot = F.one_hot(char_ids, self.config.alphabet_size)
        one_hot = one_hot.to(self.embedding.weight.dtype)
        embed = self.embedding(accent_ids)[:, None, :].expand(
            -1, char_ids.shape[1], -1)
        return torch.cat([one_hot, embed], dim=-1)


class _ResBlock(nn.Module):
    def __init__(self, channels: int, kernel: int = 5, dilations=(1, 3)):
        super().__init__()
        self.convs = nn.ModuleList([
            nn.Conv1d(channels, channels, kernel, padding=d * (kernel - 1) // 2,
                      dilation=d)
            for d in dilations
        ])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = x + conv(F.leaky_relu(x, 0.1))
        return x


class Generator(nn.Module):
    """Upsampling vocoder conditioned on content code plus acoustic features.

    Accent information additionally modulates every stage through
    feature-wise scale/shift computed from the embedding block of the
    content code, giving the net a direct path from accent identity to
    spectral shaping.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        ch = config.generator_channels
        self.pre = nn.Conv1d(config.content_width + config.acoustic_dim, ch, 7,
                             padding=3)
        ups, res, films = [], [], []
        cur = ch
        for factor in config.generator_upsample:
            nxt = max(cur // 2, 8)
            if factor % 2 == 0:
                kernel, pad = 2 * factor, factor // 2
            else:
                kernel, pad = 2 * factor - 1, (factor - 1) // 2
            ups.append(nn.ConvTranspose1d(cur, nxt, kernel, stride=factor,
                                          padding=pad))
            res.append(_ResBlock(nxt))
            films.append(nn.Linear(config.accent_embed_dim, 2 * nxt))
            cur = nxt
        self.ups = nn.ModuleList(ups)
        self.res = nn.ModuleList(res)
        self.films = nn.ModuleList(films)
        self.post = nn.Conv1d(cur, 1, 7, padding=3)

    def forward(self, content: torch.Tensor, acoustic: torch.Tensor) -> torch.Tensor:
        # content: (B, T, C+E); acoustic: (B, T, D_a) -> (B, T * upsample)
        if content.shape[1] != acoustic.shape[1]:
            raise DataError(
                f"content frames {content.shape[1]} != acoustic frames "
                f"{acoustic.shape[1]}; align before generating")
        embed = content[:, 0, self.config.alphabet_size:]
        x = self.pre(torch.cat([content, acoustic], dim=-1).transpose(1, 2))
        for up, res, film in zip(self.ups, self.res, self.films):
            x = up(F.leaky_relu(x, 0.1))
            gamma, beta = film(embed).chunk(2, dim=-1)
            x = x * (1.0 + gamma[:, :, None]) + beta[:, :, None]
            x = res(x)
        return torch.tanh(self.post(F.leaky_relu(x, 0.1))).squeeze(1)


class WaveDiscriminator(nn.Module):
    """Strided convolutional realism critic; one score per waveform."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        layers = []
        prev = 1
        for ch in config.disc_channels:
            layers.append(nn.Conv1d(prev, ch, 15, stride=4, padding=7))
            layers.append(nn.LeakyReLU(0.1))
            prev = ch
        layers.append(nn.Conv1d(prev, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        return self.net(wave[:, None, :]).mean(dim=(1, 2))


class AccentDiscriminator(nn.Module):
    """Accent classifier over acoustic features; the disentanglement critic."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        hidden = max(config.acoustic_dim, 32)
        self.net = nn.Sequential(
            nn.Conv1d(config.acoustic_dim, hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.1),
            nn.Conv1d(hidden, hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.1),
        )
        self.head = nn.Linear(hidden, config.num_accents)

    def forward(self, acoustic: torch.Tensor) -> torch.Tensor:
        # acoustic: (B, T, D_a) -> (B, N) time-pooled logits
        h = self.net(acoustic.transpose(1, 2)).mean(dim=2)
        return self.head(h)


def sinusoidal_encoding(length: int, dim: int, dtype, device) -> torch.Tensor:
    position = torch.arange(length, dtype=dtype, device=device)[:, None]
    idx = torch.arange(0, dim, 2, dtype=dtype, device=device)
    angles = position / torch.pow(torch.tensor(10000.0, dtype=dtype), idx / dim)
    enc = torch.zeros(length, dim, dtype=dtype, device=device)
    enc[:, 0::2] = torch.sin(angles)
    enc[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return enc


class AccentTransformer(nn.Module):
    """Sequence accent classifier over MFCC+deltas, read at a class token."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.proj = nn.Linear(39, config.at_channels)
        self.cls_token = nn.Parameter(torch.zeros(config.at_channels))
        layer = nn.TransformerEncoderLayer(
            d_model=config.at_channels, nhead=config.at_heads,
            dim_feedforward=config.at_ff_dim, dropout=config.at_dropout,
            batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.at_layers,
                                             enable_nested_tensor=False)
        self.head = nn.Linear(config.at_channels, config.num_accents)

    def forward(self, mfcc: torch.Tensor) -> torch.Tensor:
        # mfcc: (B, T, 39) -> (B, N)
        if mfcc.shape[-1] != 39:
            raise DataError(f"accent transformer expects 39-dim input, got "
                            f"{mfcc.shape[-1]}")
        x = self.proj(mfcc)
        x = x + sinusoidal_encoding(x.shape[1], x.shape[2], x.dtype, x.device)
        cls = self.cls_token.expand(x.shape[0], 1, -1)
        h = self.encoder(torch.cat([cls, x], dim=1))
        return self.head(h[:, 0])


class WavePhoneRecognizer(nn.Module):
    """Strided conv front end plus transformer; CTC log-probs over phones+blank."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        channels = [1, 32, config.wave_rec_dim]
        while len(channels) < len(config.wave_rec_strides) + 1:
            channels.insert(-1, channels[-2])
        convs = []
        for i, stride in enumerate(config.wave_rec_strides):
            convs.append(_StridedConv(channels[i], channels[i + 1], stride))
            convs.append(nn.GELU())
        self.frontend = nn.Sequential(*convs)
        layer = nn.TransformerEncoderLayer(
            d_model=config.wave_rec_dim, nhead=config.wave_rec_heads,
            dim_feedforward=config.wave_rec_ff_dim, dropout=0.0,
            batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.wave_rec_layers,
                                             enable_nested_tensor=False)
        self.head = nn.Linear(config.wave_rec_dim, config.num_phones + 1)

    @property
    def stride_product(self) -> int:
        return math.prod(self.config.wave_rec_strides)

    def encoder_states(self, wave: torch.Tensor) -> torch.Tensor:
        # wave: (B, N) -> (B, T', D) with T' = ceil(N / stride_product)
        x = self.frontend(wave[:, None, :]).transpose(1, 2)
        x = x + sinusoidal_encoding(x.shape[1], x.shape[2], x.dtype, x.device)
        return self.encoder(x)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        return F.log_softmax(self.head(self.encoder_states(wave)), dim=-1)


class ContentPhoneRecognizer(nn.Module):
    """Phone CTC head over the content code; convolutional positional encoding."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.proj = nn.Linear(config.content_width, config.content_dim)
        self.pos_conv = nn.Conv1d(config.content_dim, config.content_dim,
                                  kernel_size=15, padding=7,
                                  groups=math.gcd(config.content_dim, 16))
        layer = nn.TransformerEncoderLayer(
            d_model=config.content_dim, nhead=config.content_heads,
            dim_feedforward=config.content_ff_dim, dropout=0.0,
            batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.content_layers,
                                             enable_nested_tensor=False)
        self.head = nn.Linear(config.content_dim, config.num_phones + 1)

    def forward(self, content: torch.Tensor) -> torch.Tensor:
        # content: (B, T, C+E) -> (B, T, num_phones + 1); no downsampling
        x = self.proj(content)
        x = x + F.gelu(self.pos_conv(x.transpose(1, 2))).transpose(1, 2)
        return F.log_softmax(self.head(self.encoder(x)), dim=-1)


class ReprHead(nn.Module):
    """Accent representation: projection of pooled recognizer states, plus
    a second projection used for accent classification."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.project = nn.Linear(config.wave_rec_dim, config.repr_dim)
        self.classify = nn.Linear(config.repr_dim, config.num_accents)

    def forward(self, pooled_states: torch.Tensor) -> torch.Tensor:
        return self.project(pooled_states)


class AcmModels(nn.Module):
    """Container bundling every trainable piece of the conversion model."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.acoustic_encoder = AcousticEncoder(config)
        self.content_builder = ContentCodeBuilder(config)
        self.generator = Generator(config)
        self.wave_disc = WaveDiscriminator(config)
        self.accent_disc = AccentDiscriminator(config)
        self.accent_transformer = AccentTransformer(config)
        self.wave_recognizer = WavePhoneRecognizer(config)
        self.content_recognizer = ContentPhoneRecognizer(config)
        self.repr_head = ReprHead(config)

    def generator_modules(self) -> list[nn.Module]:
        return [self.generator, self.acoustic_encoder, self.content_builder]

    def pooled_recognizer_states(self, wave: torch.Tensor) -> torch.Tensor:
        return self.wave_recognizer.encoder_states(wave).mean(dim=1)


# ---------------------------------------------------------------------------
# character/frame alignment


def chars_to_ids(text: str, config: ModelConfig) -> list[int]:
    return [config.char_id(ch) for ch in text]


def repeat_to_frames(ids: list[int], num_frames: int) -> list[int]:
    """Nearest-neighbor repetition of a symbol sequence to a frame grid."""
    if not ids:
        raise DataError("cannot align an empty symbol sequence")
    scale = len(ids) / num_frames
    return [ids[min(int(f * scale), len(ids) - 1)] for f in range(num_frames)]


def frame_chars(text: str, num_frames: int, config: ModelConfig,
                phone_seq: PhoneSeq | None = None,
                inventory: PhoneInventory | None = None,
                frame_rate: float = 100.0) -> list[int]:
    """Frame-level character ids for a transcript.

    With a timed phone annotation, each annotated phone is matched to the
    transcript character of the same rank (silences map to the space
    symbol), which pins characters to their actual audio spans. Without
    times the character sequence is stretched uniformly.
    """
    if phone_seq is not None and phone_seq.times is not None and inventory is not None:
        non_space = [config.char_id(ch) for ch in text if ch != " "]
        space = config.char_id(" ")
        silence_ids = {inventory.id_of(lab) for lab in inventory.labels
                       if inventory.features_of(inventory.id_of(lab)).type == "silence"}
        ranks = [i for i in phone_seq.ids if i not in silence_ids]
        if len(ranks) == len(non_space):
            per_phone_char = []
            k = 0
            for pid in phone_seq.ids:
                if pid in silence_ids:
                    per_phone_char.append(space)
                else:
                    per_phone_char.append(non_space[k])
                    k += 1
            out = []
            for frame in range(num_frames):
                t = (frame + 0.5) / frame_rate
                idx = _covering_phone(phone_seq.times, t)
                out.append(per_phone_char[idx])
            return out
    return repeat_to_frames(chars_to_ids(text, config), num_frames)


def _covering_phone(times, t: float) -> int:
    for i, (start, end) in enumerate(times):
        if start <= t < end:
            return i
    return len(times) - 1 if t >= times[-1][1] else 0


# ---------------------------------------------------------------------------
# inference wrappers over AudioClip / numpy


def encode_acoustic(models: AcmModels, clip: AudioClip) -> np.ndarray:
    """AcousticFeatures of one clip, (T, D_a)."""
    dtype = next(models.parameters()).dtype
    wave = torch.as_tensor(clip.samples, dtype=dtype)[None, :]
    with torch.no_grad():
        return models.acoustic_encoder(wave)[0].cpu().numpy()


def build_content_code(models: AcmModels, char_ids: list[int],
                       accent_id: int) -> np.ndarray:
    """ContentCode matrix (T, C+E) for per-frame characters and one accent."""
    ids = torch.tensor(char_ids, dtype=torch.long)[None, :]
    accent = torch.tensor([accent_id], dtype=torch.long)
    with torch.no_grad():
        return models.content_builder(ids, accent)[0].cpu().numpy()


def generate(models: AcmModels, content: np.ndarray,
             acoustic: np.ndarray) -> AudioClip:
    """Render a waveform of length T * upsample_product samples."""
    dtype = next(models.parameters()).dtype
    c = torch.as_tensor(content, dtype=dtype)[None, :, :]
    a = torch.as_tensor(acoustic, dtype=dtype)[None, :, :]
    with torch.no_grad():
        wave = models.generator(c, a)[0].cpu().numpy()
    return AudioClip(np.clip(wave, -1.0, 1.0), 16000)


def accent_discriminator_logits(models: AcmModels, acoustic: np.ndarray) -> np.ndarray:
    dtype = next(models.parameters()).dtype
    with torch.no_grad():
        return models.accent_disc(
            torch.as_tensor(acoustic, dtype=dtype)[None, :, :])[0].cpu().numpy()


def accent_transformer_logits(models: AcmModels, mfcc: np.ndarray) -> np.ndarray:
    dtype = next(models.parameters()).dtype
    models.accent_transformer.eval()
    with torch.no_grad():
        return models.accent_transformer(
            torch.as_tensor(mfcc, dtype=dtype)[None, :, :])[0].cpu().numpy()


def phone_logits_wave(models: AcmModels, clip: AudioClip) -> np.ndarray:
    dtype = next(models.parameters()).dtype
    wave = torch.as_tensor(clip.samples, dtype=dtype)[None, :]
    with torch.no_grad():
        return models.wave_recognizer(wave)[0].cpu().numpy()


def phone_logits_content(models: AcmModels, content: np.ndarray) -> np.ndarray:
    dtype = next(models.parameters()).dtype
    with torch.no_grad():
        return models.content_recognizer(
            torch.as_tensor(content, dtype=dtype)[None, :, :])[0].cpu().numpy()


def accent_representation(models: AcmModels, clip: AudioClip) -> np.ndarray:
    dtype = next(models.parameters()).dtype
    wave = torch.as_tensor(clip.samples, dtype=dtype)[None, :]
    with torch.no_grad():
        pooled = models.pooled_recognizer_states(wave)
        return models.repr_head(pooled)[0].cpu().numpy()


def repr_classify(models: AcmModels, representation: np.ndarray) -> np.ndarray:
    dtype = next(models.parameters()).dtype
    with torch.no_grad():
        return models.repr_head.classify(
            torch.as_tensor(representation, dtype=dtype)[None, :])[0].cpu().numpy()


# ---------------------------------------------------------------------------
# gradient checks


def _tiny_config() -> ModelConfig:
    return ModelConfig(
        num_accents=3, char_alphabet=" ab", accent_embed_dim=4, acoustic_dim=6,
        acoustic_strides=(2, 2), acoustic_channels=(8,), generator_upsample=(2, 2),
        generator_channels=16, at_channels=8, at_layers=1, at_heads=2,
        at_ff_dim=16, at_dropout=0.0, content_dim=8, content_layers=1,
        content_heads=2, content_ff_dim=16, wave_rec_strides=(2, 2),
        wave_rec_dim=8, wave_rec_layers=1, wave_rec_heads=2, wave_rec_ff_dim=16,
        num_phones=5, repr_dim=4)


def gradient_check_all(seed: int = 0, instances: int = 10, entries: int = 3):
    """Finite-difference checks for every network at float64.

    Yields (name, worst relative error) pairs; the probe is the sum of
    each network's outputs on inputs frozen per instance.
    """
    from .oracles import module_gradient_check

    rng = np.random.default_rng(seed)
    config = _tiny_config()
    t_frames = 6
    n_samples = t_frames * config.frame_stride
    torch.manual_seed(seed)
    models = AcmModels(config).double().eval()

    def draw_wave():
        return torch.tensor(rng.normal(scale=0.2, size=(2, n_samples)),
                            dtype=torch.float64)

    def draw_content():
        chars = torch.tensor(rng.integers(0, config.alphabet_size,
                                          size=(2, t_frames)))
        accents = torch.tensor(rng.integers(0, config.num_accents, size=2))
        acoustic = torch.tensor(rng.normal(size=(2, t_frames, config.acoustic_dim)),
                                dtype=torch.float64)
        return chars, accents, acoustic

    def case_probes():
        wave = draw_wave()
        chars, accents, acoustic = draw_content()
        feats = torch.tensor(rng.normal(size=(2, t_frames, config.acoustic_dim)),
                             dtype=torch.float64)
        mfcc = torch.tensor(rng.normal(size=(2, 5, 39)), dtype=torch.float64)
        m = models
        return (
            ("acoustic_encoder", m.acoustic_encoder,
             lambda: m.acoustic_encoder(wave).sum()),
            ("generator+content_builder",
             nn.ModuleList([m.generator, m.content_builder]),
             lambda: m.generator(m.content_builder(chars, accents), acoustic).sum()),
            ("wave_disc", m.wave_disc, lambda: m.wave_disc(wave).sum()),
            ("accent_disc", m.accent_disc, lambda: m.accent_disc(feats).sum()),
            ("accent_transformer", m.accent_transformer,
             lambda: m.accent_transformer(mfcc).sum()),
            ("wave_recognizer", m.wave_recognizer,
             lambda: m.wave_recognizer(wave).sum()),
            ("content_recognizer", m.content_recognizer,
             lambda: m.content_recognizer(m.content_builder(chars, accents)).sum()),
            ("repr_head", m.repr_head,
             lambda: m.repr_head.classify(
                 m.repr_head(m.pooled_recognizer_states(wave))).sum()),
        )

    worst_by_name: dict[str, float] = {}
    for _ in range(instances):
        for name, module, probe in case_probes():
            err = module_gradient_check(module, probe, entries, rng)
            worst_by_name[name] = max(worst_by_name.get(name, 0.0), err)
    yield from worst_by_name.items()
