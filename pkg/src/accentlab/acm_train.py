"""Accent-symmetric conversion-model training, checkpointing, and the
cross-accent synthesis pipeline.

Per-step order: (1) realism discriminator, (2) remaining critics (accent
discriminator on acoustic features, accent transformer, waveform phone
recognizer, representation classifier), (3) generator group against the
weighted total. The accent transformer and the waveform phone recognizer
only see generated audio once the warm-up gate has elapsed; before that
their feedback terms are never computed.
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

from .audio import SAMPLE_RATE, AudioClip, load_clip, write_wav
from .checkpoint import load_archive, load_module_arrays, module_arrays, save_archive
from .errors import DataError, NumericError
from .features import MelConfig
from .losses import (LossWeights, ctc_loss_batch, disentangle_loss,
                     gan_realism_losses, total_generator_loss, weighted_total)
from .manifest import ManifestEntry, save_manifest
from .nets import AcmModels, ModelConfig, frame_chars
from .phones import PhoneInventory, PhoneSeq, default_inventory
from .torchdsp import TorchMel, TorchMfcc

OPT_GROUPS = ("generator", "realism_disc", "accent_disc", "accent_transformer",
              "wave_recognizer", "content_recognizer", "repr_head")


@dataclass(frozen=True)
class OptSpec:
    """Adam settings with closed-form per-step exponential decay."""

    lr: float = 3e-5
    decay_per_step: float = 0.999995
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise DataError("learning rate must be positive")
        if not 0.0 < self.decay_per_step <= 1.0:
            raise DataError("decay_per_step must be in (0, 1]")


def lr_at_step(spec: OptSpec, step: int) -> float:
    """Closed-form decayed rate: lr * r^step."""
    if step < 0:
        raise DataError("step must be >= 0")
    return spec.lr * spec.decay_per_step ** step


def default_opt_specs() -> dict[str, OptSpec]:
    gan = OptSpec(lr=2e-4, decay_per_step=0.999995, betas=(0.8, 0.99))
    recognizer = OptSpec(lr=3e-5, decay_per_step=0.999995)
    return {
        "generator": gan,
        "realism_disc": gan,
        "accent_disc": gan,
        "accent_transformer": gan,
        "wave_recognizer": recognizer,
        "content_recognizer": recognizer,
        "repr_head": gan,
    }


@dataclass
class TrainSchedule:
    batch_size: int = 8
    crop_seconds: float = 1.0
    at_warmup_steps: int = 500
    total_steps: int = 5000
    checkpoint_every: int = 0  # 0: final checkpoint only
    optimizers: dict[str, OptSpec] = field(default_factory=default_opt_specs)

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.at_warmup_steps > self.total_steps:
            raise DataError("warmup must not exceed total_steps")
        for name in OPT_GROUPS:
            if name not in self.optimizers:
                raise DataError(f"missing optimizer spec for group {name!r}")

    def to_dict(self) -> dict:
        record = asdict(self)
        record["optimizers"] = {k: asdict(v) for k, v in self.optimizers.items()}
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "TrainSchedule":
        record = dict(record)
        opts = record.pop("optimizers", {})
        merged = default_opt_specs()
        for key, value in opts.items():
            value = dict(value)
            if "betas" in value:
                value["betas"] = tuple(value["betas"])
            merged[key] = OptSpec(**value)
        return cls(optimizers=merged, **record)


@dataclass
class _Utterance:
    entry: ManifestEntry
    wave: torch.Tensor
    accent_id: int
    phone_char_ids: list[int] | None   # per annotated phone, space for silences
    phone_seq: PhoneSeq | None


class _Dataset:
    """Decoded, annotation-joined view of the training manifests."""

    def __init__(self, entries, base_dir, annotations, config: ModelConfig,
                 inventory: PhoneInventory, accent_to_id: dict[str, int]):
        self.utts: list[_Utterance] = []
        self.accent_to_id = accent_to_id
        self.inventory = inventory
        silence = {inventory.id_of(lab) for lab in inventory.labels
                   if inventory.features_of(inventory.id_of(lab)).type == "silence"}
        self.silence_ids = silence
        for entry in entries:
            clip = load_clip(os.path.join(base_dir, entry.audio_path))
            seq = annotations.get(entry.phones_ref) if entry.phones_ref else None
            phone_chars = None
            if seq is not None and seq.times is not None:
                non_space = [config.char_id(c) for c in entry.text if c != " "]
                ranked = [i for i in seq.ids if i not in silence]
                if len(ranked) == len(non_space):
                    space = config.char_id(" ")
                    phone_chars, k = [], 0
                    for pid in seq.ids:
                        if pid in silence:
                            phone_chars.append(space)
                        else:
                            phone_chars.append(non_space[k])
                            k += 1
            self.utts.append(_Utterance(
                entry=entry,
                wave=torch.as_tensor(clip.samples, dtype=torch.float32),
                accent_id=accent_to_id[entry.accent],
                phone_char_ids=phone_chars,
                phone_seq=seq))

    def crop(self, utt: _Utterance, start_sample: int, crop_samples: int,
             frame_stride: int, config: ModelConfig):
        """Waveform crop plus aligned frame characters and phone targets."""
        wave = utt.wave[start_sample:start_sample + crop_samples]
        if wave.shape[0] < crop_samples:
            wave = F.pad(wave, (0, crop_samples - wave.shape[0]))
        num_frames = crop_samples // frame_stride
        t0 = start_sample / SAMPLE_RATE
        t1 = t0 + crop_samples / SAMPLE_RATE
        if utt.phone_seq is not None and utt.phone_seq.times is not None \
                and utt.phone_char_ids is not None:
            chars, targets = [], []
            times = utt.phone_seq.times
            for f in range(num_frames):
                t = t0 + (f + 0.5) * frame_stride / SAMPLE_RATE
                chars.append(utt.phone_char_ids[_interval_index(times, t)])
            for pid, (s, e) in zip(utt.phone_seq.ids, times):
                overlap = min(e, t1) - max(s, t0)
                if pid not in self.silence_ids and overlap >= 0.4 * (e - s):
                    targets.append(pid)
        else:
            all_chars = [config.char_id(c) for c in utt.entry.text]
            frac0 = start_sample / max(len(utt.wave), 1)
            frac1 = min(1.0, (start_sample + crop_samples) / max(len(utt.wave), 1))
            lo = int(frac0 * len(all_chars))
            hi = max(lo + 1, int(frac1 * len(all_chars)))
            span = all_chars[lo:hi]
            scale = len(span) / num_frames
            chars = [span[min(int(f * scale), len(span) - 1)]
                     for f in range(num_frames)]
            targets = []
        return wave, chars, targets


def _interval_index(times, t: float) -> int:
    for i, (start, end) in enumerate(times):
        if start <= t < end:
            return i
    return len(times) - 1 if t >= times[-1][1] else 0


@dataclass
class TrainResult:
    checkpoint_paths: list[str]
    log_path: str
    models: AcmModels
    accent_to_id: dict[str, int]
    mel_threshold: float


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(step,))))


def train_acm(entries: list[ManifestEntry], base_dir,
              annotations: dict[str, PhoneSeq],
              model_config: ModelConfig, weights: LossWeights,
              schedule: TrainSchedule, seed: int, out_dir,
              inventory: PhoneInventory | None = None,
              accent_weights: dict[str, float] | None = None,
              log_every: int = 1) -> TrainResult:
    """Run the accent-symmetric training loop; writes logs and checkpoints."""
    if not entries:
        raise DataError("empty training manifest")
    inventory = inventory or default_inventory()
    if model_config.num_phones != inventory.size:
        raise DataError(f"model expects {model_config.num_phones} phones but "
                        f"inventory has {inventory.size}")
    accents = sorted({e.accent for e in entries})
    if len(accents) > model_config.num_accents:
        raise DataError(f"{len(accents)} accents exceed configured "
                        f"num_accents={model_config.num_accents}")
    accent_to_id = {label: i for i, label in enumerate(accents)}

    os.makedirs(out_dir, exist_ok=True)
    torch.manual_seed(seed)
    models = AcmModels(model_config)
    dataset = _Dataset(entries, base_dir, annotations, model_config, inventory,
                       accent_to_id)
    mel = TorchMel()
    mfcc = TorchMfcc()
    blank = inventory.blank_id
    crop_samples = int(schedule.crop_seconds * SAMPLE_RATE)
    frame_stride = model_config.frame_stride

    groups = {
        "generator": list(models.generator.parameters())
        + list(models.acoustic_encoder.parameters())
        + list(models.content_builder.parameters()),
        "realism_disc": list(models.wave_disc.parameters()),
        "accent_disc": list(models.accent_disc.parameters()),
        "accent_transformer": list(models.accent_transformer.parameters()),
        "wave_recognizer": list(models.wave_recognizer.parameters()),
        "content_recognizer": list(models.content_recognizer.parameters()),
        "repr_head": list(models.repr_head.parameters()),
    }
    opts = {name: torch.optim.Adam(params, lr=schedule.optimizers[name].lr,
                                   betas=schedule.optimizers[name].betas,
                                   eps=schedule.optimizers[name].eps)
            for name, params in groups.items()}

    # Per-draw accent weighting (uniform by default).
    by_accent: dict[str, list[int]] = {}
    for i, utt in enumerate(dataset.utts):
        by_accent.setdefault(utt.entry.accent, []).append(i)
    if accent_weights:
        labels = sorted(by_accent)
        probs = np.array([accent_weights.get(lab, 1.0) for lab in labels], float)
        probs = probs / probs.sum()
    else:
        labels, probs = None, None

    log_path = os.path.join(out_dir, "train_log.jsonl")
    checkpoint_paths: list[str] = []
    symmetric_batches = 0

    with open(log_path, "w", encoding="utf-8") as log_fh:
        for step in range(schedule.total_steps):
            step_start = time.time()
            rng = _step_rng(seed, step)
            for name, spec in schedule.optimizers.items():
                lr = lr_at_step(spec, step)
                for group in opts[name].param_groups:
                    group["lr"] = lr

            # ---------------- batch assembly
            if labels is not None:
                chosen = [labels[int(rng.choice(len(labels), p=probs))]
                          for _ in range(schedule.batch_size)]
                idxs = [by_accent[lab][int(rng.integers(0, len(by_accent[lab])))]
                        for lab in chosen]
            else:
                idxs = [int(rng.integers(0, len(dataset.utts)))
                        for _ in range(schedule.batch_size)]
            waves, char_rows, accent_ids, targets = [], [], [], []
            for i in idxs:
                utt = dataset.utts[i]
                max_start = max(len(utt.wave) - crop_samples, 0)
                start = int(rng.integers(0, max_start + 1))
                wave, chars, phones = dataset.crop(utt, start, crop_samples,
                                                   frame_stride, model_config)
                waves.append(wave)
                char_rows.append(chars)
                accent_ids.append(utt.accent_id)
                targets.append(phones)
            real = torch.stack(waves)
            chars = torch.tensor(char_rows, dtype=torch.long)
            accents_t = torch.tensor(accent_ids, dtype=torch.long)
            # Accent symmetry: the content code accent must equal the audio's.
            content_accents = accents_t.clone()
            assert torch.equal(content_accents, accents_t), \
                "accent-asymmetric batch in training"
            symmetric_batches += 1

            acoustic = models.acoustic_encoder(real)
            content = models.content_builder(chars, content_accents)
            fake = models.generator(content, acoustic)
            at_active = step >= schedule.at_warmup_steps

            # ---------------- phase 1: realism discriminator
            opts["realism_disc"].zero_grad()
            d_loss, _ = gan_realism_losses(models.wave_disc(real),
                                           models.wave_disc(fake.detach()))
            d_loss.backward()
            opts["realism_disc"].step()

            # ---------------- phase 2: remaining critics
            opts["accent_disc"].zero_grad()
            disc_ce = F.cross_entropy(models.accent_disc(acoustic.detach()),
                                      accents_t)
            disc_ce.backward()
            opts["accent_disc"].step()

            opts["accent_transformer"].zero_grad()
            at_input = mfcc(real)
            at_logits = models.accent_transformer(at_input)
            at_ce = F.cross_entropy(at_logits, accents_t)
            if at_active:
                at_ce = at_ce + F.cross_entropy(
                    models.accent_transformer(mfcc(fake.detach())), accents_t)
            at_ce.backward()
            opts["accent_transformer"].step()

            opts["wave_recognizer"].zero_grad()
            rec_logp = models.wave_recognizer(real)
            ctc_real, used = ctc_loss_batch(rec_logp, targets, blank)
            if used:
                ctc_real.backward()
                opts["wave_recognizer"].step()

            opts["repr_head"].zero_grad()
            with torch.no_grad():
                pooled = models.pooled_recognizer_states(real)
            repr_ce = F.cross_entropy(
                models.repr_head.classify(models.repr_head(pooled)), accents_t)
            repr_ce.backward()
            opts["repr_head"].step()

            # ---------------- phase 3: generator group
            opts["generator"].zero_grad()
            opts["content_recognizer"].zero_grad()
            terms: dict[str, torch.Tensor] = {}
            terms["mel"] = torch.mean(torch.abs(mel(real) - mel(fake)))
            _, g_loss = gan_realism_losses(models.wave_disc(real).detach(),
                                           models.wave_disc(fake))
            terms["gan"] = g_loss
            terms["adv_disentangle"] = disentangle_loss(models.accent_disc(acoustic))
            ctc_content, used_c = ctc_loss_batch(models.content_recognizer(content),
                                                 targets, blank)
            if used_c:
                terms["ctc_content"] = ctc_content
            if at_active:
                terms["at"] = F.cross_entropy(
                    models.accent_transformer(mfcc(fake)), accents_t)
                ctc_fake, used_f = ctc_loss_batch(models.wave_recognizer(fake),
                                                  targets, blank)
                if used_f:
                    terms["ctc_wave"] = ctc_fake
            total = weighted_total(terms, weights)
            if not torch.isfinite(total):
                _save_acm(os.path.join(out_dir, "diagnostic.ckpt"), models,
                          accent_to_id, step, float("nan"))
                raise NumericError(
                    f"non-finite generator loss at step {step}; diagnostic "
                    "checkpoint written")
            total.backward()
            opts["generator"].step()
            opts["content_recognizer"].step()

            report = total_generator_loss(
                {k: float(v.detach()) for k, v in terms.items()}, weights,
                step=step)
            report.wall_clock = time.time() - step_start
            if step % log_every == 0 or step == schedule.total_steps - 1:
                record = json.loads(report.to_json_line())
                record["critic"] = {
                    "realism_disc": float(d_loss.detach()),
                    "accent_disc": float(disc_ce.detach()),
                    "accent_transformer": float(at_ce.detach()),
                    "wave_recognizer_ctc": float(ctc_real.detach()) if used else None,
                    "repr_head": float(repr_ce.detach()),
                }
                record["at_on_generated"] = bool(at_active)
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")

            if schedule.checkpoint_every and (step + 1) % schedule.checkpoint_every == 0:
                path = os.path.join(out_dir, f"acm_step{step + 1:07d}.ckpt")
                _save_acm(path, models, accent_to_id, step + 1,
                          _mel_threshold(models, dataset, mel, crop_samples, seed))
                checkpoint_paths.append(path)

    threshold = _mel_threshold(models, dataset, mel, crop_samples, seed)
    final_path = os.path.join(out_dir, "acm_final.ckpt")
    _save_acm(final_path, models, accent_to_id, schedule.total_steps, threshold)
    checkpoint_paths.append(final_path)
    return TrainResult(checkpoint_paths=checkpoint_paths, log_path=log_path,
                       models=models, accent_to_id=accent_to_id,
                       mel_threshold=threshold)


def _mel_threshold(models: AcmModels, dataset: _Dataset, mel: TorchMel,
                   crop_samples: int, seed: int, sample: int = 8) -> float:
    """Same-accent reconstruction quality at train end, with headroom."""
    rng = _step_rng(seed, 10 ** 9)
    values = []
    models.eval()
    with torch.no_grad():
        for _ in range(sample):
            utt = dataset.utts[int(rng.integers(0, len(dataset.utts)))]
            start = int(rng.integers(0, max(len(utt.wave) - crop_samples, 0) + 1))
            wave, chars, _ = dataset.crop(utt, start, crop_samples,
                                          models.config.frame_stride, models.config)
            content = models.content_builder(
                torch.tensor([chars]), torch.tensor([utt.accent_id]))
            fake = models.generator(content, models.acoustic_encoder(wave[None, :]))
            values.append(float(torch.mean(torch.abs(mel(wave[None, :]) - mel(fake)))))
    models.train()
    return 1.5 * float(np.mean(values))


def _save_acm(path, models: AcmModels, accent_to_id: dict[str, int], step: int,
              mel_threshold: float) -> None:
    save_archive(path, module_arrays(models),
                 config=json.loads(models.config.to_json()),
                 meta={"kind": "acm", "step": step,
                       "accent_to_id": accent_to_id,
                       "mel_threshold": mel_threshold})


def load_acm(path) -> tuple[AcmModels, dict]:
    """Rebuild an AcmModels bundle from a checkpoint archive."""
    archive = load_archive(path)
    if archive.meta.get("kind") != "acm":
        raise DataError(f"{path} is not a conversion-model checkpoint")
    config = ModelConfig.from_json(json.dumps(archive.config))
    models = AcmModels(config)
    load_module_arrays(models, archive.arrays)
    models.eval()
    return models, archive.meta


def convert(clip: AudioClip, target_accent: int, models: AcmModels,
            text: str, phone_seq: PhoneSeq | None = None,
            inventory: PhoneInventory | None = None) -> AudioClip:
    """Re-render a clip with a different accent embedding.

    Acoustic features come from the source clip; the content code is
    rebuilt with the target accent. Output is trimmed to the source length.
    """
    if not 0 <= target_accent < models.config.num_accents:
        raise DataError(f"target accent {target_accent} outside configured range")
    inventory = inventory or default_inventory()
    models.eval()
    wave = torch.as_tensor(clip.samples, dtype=torch.float32)[None, :]
    with torch.no_grad():
        acoustic = models.acoustic_encoder(wave)
        num_frames = acoustic.shape[1]
        chars = frame_chars(text, num_frames, models.config, phone_seq, inventory,
                            frame_rate=SAMPLE_RATE / models.config.frame_stride)
        content = models.content_builder(torch.tensor([chars]),
                                         torch.tensor([target_accent]))
        out = models.generator(content, acoustic)[0].cpu().numpy()
    out = np.clip(out[:len(clip.samples)], -1.0, 1.0)
    return AudioClip(out, SAMPLE_RATE)


def synthesize_corpus(entries: list[ManifestEntry], base_dir,
                      annotations: dict[str, PhoneSeq],
                      target_accent: str, checkpoint_path, out_dir,
                      inventory: PhoneInventory | None = None,
                      max_failure_fraction: float = 0.01,
                      log=None) -> list[ManifestEntry]:
    """Convert every entry to `target_accent`, writing a synthetic manifest."""
    models, meta = load_acm(checkpoint_path)
    accent_to_id = meta["accent_to_id"]
    if target_accent not in accent_to_id:
        raise DataError(f"accent {target_accent!r} unknown to checkpoint "
                        f"(has {sorted(accent_to_id)})")
    target_id = accent_to_id[target_accent]
    inventory = inventory or default_inventory()
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    outputs, failures = [], []
    for entry in entries:
        try:
            clip = load_clip(os.path.join(base_dir, entry.audio_path))
            seq = annotations.get(entry.phones_ref) if entry.phones_ref else None
            converted = convert(clip, target_id, models, entry.text, seq, inventory)
            utt_id = f"{entry.utt_id}_to_{target_accent}"
            rel = os.path.join("wav", f"{utt_id}.wav")
            write_wav(os.path.join(out_dir, rel), converted)
            outputs.append(ManifestEntry(
                utt_id=utt_id, audio_path=rel, text=entry.text,
                accent=target_accent, speaker=entry.speaker,
                phones_ref=None, origin="synthetic",
                extras={"source_utt_id": entry.utt_id,
                        "source_accent": entry.accent}))
        except (DataError, OSError) as exc:
            failures.append(f"{entry.utt_id}: {exc}")
    if failures and len(failures) > max_failure_fraction * max(len(entries), 1):
        raise DataError(f"{len(failures)} of {len(entries)} conversions failed: "
                        + "; ".join(failures[:5]))
    if log and failures:
        log(f"synthesize_corpus: {len(failures)} entries skipped")
    save_manifest(os.path.join(out_dir, "manifest.jsonl"), outputs)
    return outputs
