"""Experiment configuration files.

One JSON document drives each training command. `desk_*` presets run in
minutes on a laptop CPU and back the test suite; `paper_parity_*` presets
preserve the published operating points (20k-step accent-feedback warmup,
3e-5 recognizer learning rate with 0.999995 per-step decay, 20-layer
encoder, 180 epochs, 10k warmup steps) and are documented but not run at
desk scale.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .acm_train import OptSpec, TrainSchedule, default_opt_specs
from .asr import AsrConfig
from .errors import DataError
from .losses import LossWeights
from .nets import ModelConfig


@dataclass
class AcmExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    accent_weights: dict[str, float] | None = None

    def to_dict(self) -> dict:
        record = {
            "model": json.loads(self.model.to_json()),
            "loss_weights": asdict(self.loss_weights),
            "schedule": self.schedule.to_dict(),
        }
        if self.accent_weights:
            record["accent_weights"] = self.accent_weights
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "AcmExperimentConfig":
        known = {"model", "loss_weights", "schedule", "accent_weights"}
        unknown = set(record) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            model=ModelConfig.from_json(json.dumps(record.get("model", {}))),
            loss_weights=LossWeights(**record.get("loss_weights", {})),
            schedule=TrainSchedule.from_dict(record.get("schedule", {})),
            accent_weights=record.get("accent_weights"),
        )


@dataclass
class AsrExperimentConfig:
    asr: AsrConfig = field(default_factory=AsrConfig)

    def to_dict(self) -> dict:
        return {"asr": self.asr.to_dict()}

    @classmethod
    def from_dict(cls, record: dict) -> "AsrExperimentConfig":
        unknown = set(record) - {"asr"}
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(asr=AsrConfig.from_dict(record.get("asr", {})))


def desk_toy_model_config(num_accents: int = 3) -> ModelConfig:
    """Scaled-down network widths that train in minutes on one CPU core."""
    return ModelConfig(
        num_accents=num_accents,
        acoustic_dim=16,
        acoustic_channels=(16, 32, 48),
        generator_channels=32,
        disc_channels=(8, 16, 32, 32),
        at_channels=32, at_ff_dim=128, at_layers=2, at_heads=4,
        content_layers=2,
        wave_rec_layers=2,
    )


def desk_toy_opt_specs() -> dict[str, OptSpec]:
    """Faster rates for short from-scratch runs; recognizers included."""
    gan = OptSpec(lr=3e-4, decay_per_step=0.9995, betas=(0.8, 0.99))
    recognizer = OptSpec(lr=5e-4, decay_per_step=0.9995)
    specs = default_opt_specs()
    for name in ("generator", "realism_disc", "accent_disc",
                 "accent_transformer", "repr_head"):
        specs[name] = gan
    specs["wave_recognizer"] = recognizer
    specs["content_recognizer"] = recognizer
    return specs


def desk_acm_config(num_accents: int = 3, total_steps: int = 1200,
                    warmup: int = 300) -> AcmExperimentConfig:
    return AcmExperimentConfig(
        model=desk_toy_model_config(num_accents),
        loss_weights=LossWeights(),
        schedule=TrainSchedule(total_steps=total_steps, at_warmup_steps=warmup,
                               batch_size=8, optimizers=desk_toy_opt_specs()),
    )


def paper_parity_acm_config(num_accents: int = 8) -> AcmExperimentConfig:
    """Published operating point; documented, not run at desk scale."""
    specs = default_opt_specs()  # recognizers at 3e-5 with 0.999995 decay
    return AcmExperimentConfig(
        model=ModelConfig(num_accents=num_accents),
        loss_weights=LossWeights(),
        schedule=TrainSchedule(total_steps=500000, at_warmup_steps=20000,
                               batch_size=8, optimizers=specs),
    )


def desk_asr_config(epochs: int = 30) -> AsrExperimentConfig:
    return AsrExperimentConfig(asr=AsrConfig(epochs=epochs))


def paper_parity_asr_config() -> AsrExperimentConfig:
    """Shape of the from-scratch transducer recipe: 80 mel bands, x4 time
    reduction, 20 encoder layers with 8 heads and feed-forward 2048,
    value/norm gradient clipping at 1.0/10.0, 1e-3 learning rate with a
    10000-step linear warmup, exponential 0.96 decay after epoch 60, 180
    epochs. The published system also used a 5000-piece subword vocabulary
    and streaming-attention encoder blocks, both out of scope here."""
    return AsrExperimentConfig(asr=AsrConfig(
        proj_dim=128, enc_layers=20, enc_heads=8, enc_ff_dim=2048,
        joiner_dim=1024, pred_embed_dim=512, pred_layers=3, pred_dropout=0.3,
        lr=1e-3, warmup_steps=10000, lr_decay_factor=0.96,
        lr_decay_start_epoch=60, weight_decay=0.1, epochs=180, batch_size=8))


def load_acm_experiment(path) -> AcmExperimentConfig:
    return AcmExperimentConfig.from_dict(_read_json(path))


def load_asr_experiment(path) -> AsrExperimentConfig:
    return AsrExperimentConfig.from_dict(_read_json(path))


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config {path}: {exc.msg}")


def save_config(path, config) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
