"""Desk-scale transducer ASR: training on real/synthetic mixes, greedy
decoding, and WER evaluation grouped by accent.

The model follows the standard shape: mel input, linear projection, x4
time reduction by concatenation, transformer encoder, recurrent label
predictor, additive joiner with log-softmax over vocab+blank. Layer and
width counts are configuration; the paper-scale values live in the
paper-parity config and are documented but not run.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import load_clip
from .checkpoint import load_archive, load_module_arrays, module_arrays, save_archive
from .errors import DataError, NumericError
from .features import AugmentPolicy, MelConfig, apply_masks, mel_spectrogram, sample_masks
from .losses import transducer_loss, transducer_loss_batch
from .manifest import ManifestEntry, MixPolicy, mixed_sampler
from .nets import sinusoidal_encoding


@dataclass(frozen=True)
class AsrConfig:
    mel_bands: int = 80
    time_reduction: int = 4
    proj_dim: int = 16
    enc_layers: int = 2
    enc_heads: int = 2
    enc_ff_dim: int = 128
    joiner_dim: int = 64
    pred_embed_dim: int = 64
    pred_layers: int = 1
    pred_dropout: float = 0.1
    enc_dropout: float = 0.1
    grad_clip_value: float = 1.0
    grad_clip_norm: float = 10.0
    lr: float = 1e-3
    warmup_steps: int = 100
    lr_decay_factor: float = 0.96
    lr_decay_start_epoch: int = 60
    weight_decay: float = 0.01
    epochs: int = 30
    batch_size: int = 8
    cmvn: bool = True  # per-utterance mean/variance normalization of the mel input
    max_time_mask_frames: int = 20
    num_time_masks: int = 1
    max_freq_mask_bands: int = 8
    num_freq_masks: int = 1

    def __post_init__(self):
        for name in ("mel_bands", "time_reduction", "proj_dim", "enc_layers",
                     "joiner_dim", "pred_embed_dim", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if self.grad_clip_value <= 0 or self.grad_clip_norm <= 0:
            raise DataError("gradient clip values must be positive")

    @property
    def enc_dim(self) -> int:
        return self.proj_dim * self.time_reduction

    def augment_policy(self) -> AugmentPolicy:
        return AugmentPolicy(
            max_time_mask_frames=self.max_time_mask_frames,
            num_time_masks=self.num_time_masks,
            max_freq_mask_bands=self.max_freq_mask_bands,
            num_freq_masks=self.num_freq_masks)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, record: dict) -> "AsrConfig":
        return cls(**record)


class CharVocab:
    """Character vocabulary; blank is the last index."""

    def __init__(self, chars: list[str]):
        if len(set(chars)) != len(chars):
            raise DataError("vocabulary characters must be unique")
        self.chars = list(chars)
        self.index = {c: i for i, c in enumerate(self.chars)}

    @classmethod
    def build(cls, texts: list[str]) -> "CharVocab":
        return cls(sorted({ch for text in texts for ch in text}))

    @property
    def blank_id(self) -> int:
        return len(self.chars)

    def encode(self, text: str) -> list[int]:
        try:
            return [self.index[ch] for ch in text]
        except KeyError as exc:
            raise DataError(f"character {exc.args[0]!r} not in ASR vocabulary")

    def decode(self, ids: list[int]) -> str:
        return "".join(self.chars[i] for i in ids)


class TransducerModel(nn.Module):
    def __init__(self, config: AsrConfig, vocab_size: int):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.blank_id = vocab_size
        self.proj = nn.Linear(config.mel_bands, config.proj_dim)
        enc_dim = config.enc_dim
        layer = nn.TransformerEncoderLayer(
            d_model=enc_dim, nhead=config.enc_heads,
            dim_feedforward=config.enc_ff_dim, dropout=config.enc_dropout,
            batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.enc_layers,
                                             enable_nested_tensor=False)
        self.enc_out = nn.Linear(enc_dim, config.joiner_dim)
        self.enc_norm = nn.LayerNorm(config.joiner_dim)
        # Predictor embeds blank as the start-of-sequence symbol.
        self.embed = nn.Embedding(vocab_size + 1, config.pred_embed_dim)
        self.lstm = nn.LSTM(config.pred_embed_dim, config.pred_embed_dim,
                            num_layers=config.pred_layers, batch_first=True)
        self.pred_dropout = nn.Dropout(config.pred_dropout)
        self.pred_out = nn.Linear(config.pred_embed_dim, config.joiner_dim)
        self.pred_norm = nn.LayerNorm(config.joiner_dim)
        self.joint_out = nn.Linear(config.joiner_dim, vocab_size + 1)

    def encode(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: (T, 80) -> (T', joiner_dim); T' = floor(T / reduction)
        enc, lens = self.encode_batch([mel])
        return enc[0, :lens[0]]

    def encode_batch(self, mels: list[torch.Tensor]) -> tuple[torch.Tensor, list[int]]:
        """Padded batch encoding; returns (B, T'max, joiner_dim) and lengths."""
        red = self.config.time_reduction
        t_lens = [m.shape[0] // red for m in mels]
        if min(t_lens) == 0:
            raise DataError("utterance shorter than one reduced frame")
        normed = []
        for mel in mels:
            if self.config.cmvn:
                mel = (mel - mel.mean(dim=0, keepdim=True)) \
                    / (mel.std(dim=0, keepdim=True) + 1e-5)
            normed.append(mel)
        t_max = max(t_lens)
        batch = torch.zeros(len(mels), t_max * red, mels[0].shape[1],
                            dtype=normed[0].dtype)
        for i, mel in enumerate(normed):
            batch[i, :t_lens[i] * red] = mel[:t_lens[i] * red]
        x = self.proj(batch)
        x = x.reshape(len(mels), t_max, red * x.shape[2])
        x = x + sinusoidal_encoding(t_max, x.shape[2], x.dtype, x.device)
        pad_mask = torch.arange(t_max)[None, :] >= torch.tensor(t_lens)[:, None]
        h = self.encoder(x, src_key_padding_mask=pad_mask)
        return self.enc_norm(self.enc_out(h)), t_lens

    def predict(self, tokens: list[int]) -> torch.Tensor:
        # Start-augmented history -> (len(tokens) + 1, joiner_dim)
        return self.predict_batch([tokens])[0, :len(tokens) + 1]

    def predict_batch(self, token_lists: list[list[int]]) -> torch.Tensor:
        """Padded predictor states, (B, Umax, joiner_dim)."""
        u_max = max(len(t) for t in token_lists) + 1
        history = torch.full((len(token_lists), u_max), self.blank_id,
                             dtype=torch.long)
        for i, tokens in enumerate(token_lists):
            for j, v in enumerate(tokens):
                history[i, j + 1] = v
        out, _ = self.lstm(self.embed(history))
        out = self.pred_dropout(out)
        return self.pred_norm(self.pred_out(out))

    def joint(self, enc: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
        # Additive combination -> (T', U, vocab + 1) log probs.
        joint = torch.tanh(enc[:, None, :] + pred[None, :, :])
        return F.log_softmax(self.joint_out(joint), dim=-1)

    def lattice(self, mel: torch.Tensor, tokens: list[int]) -> torch.Tensor:
        return self.joint(self.encode(mel), self.predict(tokens))

    def lattice_batch(self, mels: list[torch.Tensor],
                      token_lists: list[list[int]]) -> tuple[torch.Tensor, list[int]]:
        """Padded (B, T'max, Umax, vocab+1) lattice plus frame lengths."""
        enc, t_lens = self.encode_batch(mels)
        pred = self.predict_batch(token_lists)
        joint = torch.tanh(enc[:, :, None, :] + pred[:, None, :, :])
        return F.log_softmax(self.joint_out(joint), dim=-1), t_lens


def greedy_decode(model: TransducerModel, mel: torch.Tensor,
                  max_emit_per_frame: int = 10) -> list[int]:
    """Greedy transducer loop: emit on non-blank, advance time on blank."""
    model.eval()
    with torch.no_grad():
        enc = model.encode(mel)
        tokens: list[int] = []
        state = None
        history = torch.tensor([[model.blank_id]], dtype=torch.long)
        pred, state = model.lstm(model.embed(history))
        pred_vec = model.pred_norm(model.pred_out(pred[0, -1]))
        for t in range(enc.shape[0]):
            emitted = 0
            while emitted < max_emit_per_frame:
                logits = model.joint_out(torch.tanh(enc[t] + pred_vec))
                best = int(torch.argmax(logits))
                if best == model.blank_id:
                    break
                tokens.append(best)
                emitted += 1
                history = torch.tensor([[best]], dtype=torch.long)
                pred, state = model.lstm(model.embed(history), state)
                pred_vec = model.pred_norm(model.pred_out(pred[0, -1]))
    return tokens


# ---------------------------------------------------------------------------
# WER


@dataclass
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_words: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.ref_words == 0:
            raise DataError("WER undefined for an empty reference")
        return self.errors / self.ref_words

    def add(self, other: "EditCounts") -> None:
        self.substitutions += other.substitutions
        self.deletions += other.deletions
        self.insertions += other.insertions
        self.ref_words += other.ref_words


def wer(ref: list[str], hyp: list[str]) -> EditCounts:
    """Levenshtein alignment with unit costs.

    Ties are broken preferring substitutions over insertion+deletion
    pairs (diagonal moves first in the backtrace).
    """
    if not ref:
        raise DataError("reference word sequence must be non-empty")
    m, n = len(ref), len(hyp)
    dist = np.zeros((m + 1, n + 1), dtype=np.int64)
    dist[:, 0] = np.arange(m + 1)
    dist[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = dist[i - 1, j] + 1
            ins = dist[i, j - 1] + 1
            dist[i, j] = min(sub, dele, ins)
    counts = EditCounts(ref_words=m)
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                counts.substitutions += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            counts.deletions += 1
            i -= 1
        else:
            counts.insertions += 1
            j -= 1
    return counts


@dataclass
class WerReport:
    groups: dict[str, EditCounts]
    aggregate: EditCounts
    skipped: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(c: EditCounts) -> dict:
            return {"substitutions": c.substitutions, "deletions": c.deletions,
                    "insertions": c.insertions, "ref_words": c.ref_words,
                    "wer": c.wer}
        return {"groups": {k: enc(v) for k, v in sorted(self.groups.items())},
                "aggregate": enc(self.aggregate),
                "skipped": dict(sorted(self.skipped.items()))}

    def to_table(self) -> str:
        rows = [("group", "S", "D", "I", "ref", "WER")]
        for label in sorted(self.groups):
            c = self.groups[label]
            rows.append((label, str(c.substitutions), str(c.deletions),
                         str(c.insertions), str(c.ref_words), f"{c.wer:.3f}"))
        c = self.aggregate
        rows.append(("ALL", str(c.substitutions), str(c.deletions),
                     str(c.insertions), str(c.ref_words), f"{c.wer:.3f}"))
        widths = [max(len(r[k]) for r in rows) for k in range(6)]
        lines = ["  ".join(cell.ljust(widths[k]) for k, cell in enumerate(row))
                 for row in rows]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# training


@dataclass
class AsrTrainResult:
    checkpoint_path: str
    log_path: str
    model: TransducerModel
    vocab: CharVocab


def _lr_for(config: AsrConfig, step: int, epoch: int) -> float:
    lr = config.lr * min(1.0, (step + 1) / max(config.warmup_steps, 1))
    if epoch >= config.lr_decay_start_epoch:
        lr *= config.lr_decay_factor ** (epoch - config.lr_decay_start_epoch + 1)
    return lr


def _mel_cache(entries, base_dir, config: MelConfig) -> dict[str, np.ndarray]:
    cache = {}
    for entry in entries:
        clip = load_clip(os.path.join(base_dir, entry.audio_path))
        cache[entry.utt_id] = mel_spectrogram(clip, config).frames.astype(np.float32)
    return cache


def train_asr(real: list[ManifestEntry], real_dir,
              synthetic: list[ManifestEntry] | None, synth_dir,
              policy: MixPolicy, config: AsrConfig, seed: int, out_dir,
              val: list[ManifestEntry] | None = None, val_dir=None,
              log=None) -> AsrTrainResult:
    """Train the transducer on a weighted real/synthetic mix.

    The vocabulary is estimated from the real training split only. One
    epoch is ceil(pool / batch) steps over the combined pool size.
    """
    if not real:
        raise DataError("real training manifest is empty")
    synthetic = synthetic or []
    if policy.synthetic_weight > 0 and not synthetic:
        raise DataError("synthetic_weight > 0 but no synthetic entries given")
    os.makedirs(out_dir, exist_ok=True)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    vocab = CharVocab.build([e.text for e in real])
    model = TransducerModel(config, len(vocab.chars))
    mel_config = MelConfig(n_mels=config.mel_bands)
    mels = _mel_cache(real, real_dir, mel_config)
    if synthetic:
        mels.update(_mel_cache(synthetic, synth_dir, mel_config))
    val = val or []
    if val:
        mels.update(_mel_cache(val, val_dir or real_dir, mel_config))

    pool = len(real) + (len(synthetic) if policy.synthetic_weight > 0 else 0)
    steps_per_epoch = math.ceil(pool / config.batch_size)
    sampler = mixed_sampler(real, synthetic, policy, rng)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr,
                                  weight_decay=config.weight_decay)
    policy_aug = config.augment_policy()
    log_path = os.path.join(out_dir, "asr_log.jsonl")
    step = 0
    with open(log_path, "w", encoding="utf-8") as log_fh:
        for epoch in range(config.epochs):
            epoch_start = time.time()
            model.train()
            epoch_loss, max_grad_norm = 0.0, 0.0
            for _ in range(steps_per_epoch):
                lr = _lr_for(config, step, epoch)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.zero_grad()
                batch_mels, batch_tokens = [], []
                for entry in (next(sampler) for _ in range(config.batch_size)):
                    mel = mels[entry.utt_id]
                    masks = sample_masks(mel.shape, policy_aug, rng)
                    mel_aug = apply_masks(mel, masks, policy_aug.mask_value)
                    batch_mels.append(torch.as_tensor(mel_aug,
                                                      dtype=torch.float32))
                    batch_tokens.append(vocab.encode(entry.text))
                lattice, t_lens = model.lattice_batch(batch_mels, batch_tokens)
                loss = transducer_loss_batch(lattice, batch_tokens, t_lens,
                                             model.blank_id).mean()
                if not torch.isfinite(loss):
                    raise NumericError(f"non-finite transducer loss at step {step}")
                loss.backward()
                nn.utils.clip_grad_value_(model.parameters(),
                                          config.grad_clip_value)
                norm = float(nn.utils.clip_grad_norm_(model.parameters(),
                                                      config.grad_clip_norm))
                max_grad_norm = max(max_grad_norm,
                                    min(norm, config.grad_clip_norm))
                optimizer.step()
                epoch_loss += float(loss.detach())
                step += 1
            record = {
                "epoch": epoch,
                "train_loss": epoch_loss / steps_per_epoch,
                "lr": _lr_for(config, step - 1, epoch),
                "max_grad_norm_after_clip": max_grad_norm,
                "steps": step,
            }
            if val:
                record["val_loss"] = _validation_loss(model, val, mels, vocab)
            record["wall_clock"] = time.time() - epoch_start
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            if log:
                log(f"epoch {epoch}: loss {record['train_loss']:.3f}")

    checkpoint_path = os.path.join(out_dir, "asr_final.ckpt")
    save_archive(checkpoint_path, module_arrays(model),
                 config=config.to_dict(),
                 meta={"kind": "asr", "vocab": vocab.chars,
                       "epochs": config.epochs})
    return AsrTrainResult(checkpoint_path=checkpoint_path, log_path=log_path,
                          model=model, vocab=vocab)


def _validation_loss(model: TransducerModel, val, mels, vocab: CharVocab) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for entry in val:
            tokens = vocab.encode(entry.text)
            lattice = model.lattice(
                torch.as_tensor(mels[entry.utt_id], dtype=torch.float32), tokens)
            total += float(transducer_loss(lattice, tokens, model.blank_id))
    model.train()
    return total / max(len(val), 1)


def load_asr(path) -> tuple[TransducerModel, CharVocab]:
    archive = load_archive(path)
    if archive.meta.get("kind") != "asr":
        raise DataError(f"{path} is not an ASR checkpoint")
    config = AsrConfig.from_dict(archive.config)
    vocab = CharVocab(archive.meta["vocab"])
    model = TransducerModel(config, len(vocab.chars))
    load_module_arrays(model, archive.arrays)
    model.eval()
    return model, vocab


def transcribe(model: TransducerModel, vocab: CharVocab, clip,
               mel_config: MelConfig = MelConfig()) -> str:
    mel = mel_spectrogram(clip, mel_config).frames.astype(np.float32)
    return vocab.decode(greedy_decode(model, torch.as_tensor(mel)))


def evaluate(model: TransducerModel, vocab: CharVocab,
             groups: dict[str, tuple[list[ManifestEntry], str]],
             mel_config: MelConfig = MelConfig(),
             workers: int = 1) -> WerReport:
    """Per-accent and pooled WER over grouped test manifests.

    Decoding parallelizes over utterances; the reduce order is the
    manifest order regardless of worker count.
    """
    report_groups: dict[str, EditCounts] = {}
    skipped: dict[str, int] = {}
    aggregate = EditCounts()

    def decode_one(job):
        entry, base_dir = job
        try:
            clip = load_clip(os.path.join(base_dir, entry.audio_path))
        except DataError:
            return None
        return transcribe(model, vocab, clip, mel_config)

    for label, (entries, base_dir) in groups.items():
        if not entries:
            raise DataError(f"evaluation group {label!r} is empty")
        jobs = [(entry, base_dir) for entry in entries]
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=workers) as pool:
                hyps = list(pool.map(decode_one, jobs))
        else:
            hyps = [decode_one(job) for job in jobs]
        counts = EditCounts()
        for entry, hyp in zip(entries, hyps):
            if hyp is None:
                skipped[label] = skipped.get(label, 0) + 1
                continue
            counts.add(wer(entry.text.split(), hyp.split()))
        report_groups[label] = counts
        aggregate.add(counts)
    return WerReport(groups=report_groups, aggregate=aggregate, skipped=skipped)
