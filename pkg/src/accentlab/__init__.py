"""accentlab: accent conversion with phonetic-knowledge losses, synthetic
accent corpus generation, and seen/unseen-accent ASR experiments at desk
scale."""

__version__ = "0.1.0"

from .audio import AudioClip, load_clip, read_wav, write_wav
from .errors import AccentLabError, DataError, NumericError, UsageError
from .features import (AugmentPolicy, MelConfig, MelSpectrogram, MfccMatrix,
                       mel_spectrogram, mfcc_with_deltas, spec_augment)
from .manifest import ManifestEntry, MixPolicy, load_manifest, mixed_sampler, save_manifest
from .phones import PhoneInventory, PhoneSeq, PhoneticFeatures, ctc_collapse, default_inventory

__all__ = [
    "AccentLabError", "AudioClip", "AugmentPolicy", "DataError", "ManifestEntry",
    "MelConfig", "MelSpectrogram", "MfccMatrix", "MixPolicy", "NumericError",
    "PhoneInventory", "PhoneSeq", "PhoneticFeatures", "UsageError",
    "ctc_collapse", "default_inventory", "load_clip", "load_manifest",
    "mel_spectrogram", "mfcc_with_deltas", "mixed_sampler", "read_wav",
    "save_manifest", "spec_augment", "write_wav",
]
