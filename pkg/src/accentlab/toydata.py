"""Synthetic toy-accent corpus generation.

Toy accents are deterministic transforms with known ground truth: a
spectral shift applied to formant and noise-band frequencies, a phone
substitution map, and a tempo factor. Speakers differ by fundamental
frequency base. Because the transforms are known, accent transfer and
disentanglement claims can be checked against an independent probe
classifier instead of human listeners.

Phone rendering is driven entirely by the categorical features of the
loaded inventory, so substituting a different inventory file keeps the
generator usable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression

from .audio import SAMPLE_RATE, AudioClip, load_clip, write_wav
from .errors import DataError
from .features import MelConfig, mfcc_with_deltas
from .manifest import ManifestEntry, save_manifest
from .phones import PhoneInventory, PhoneSeq, default_inventory, save_annotations

# Canonical spelling of the toy lexicon: one character per phone.
CHAR_TO_PHONE = {
    "a": "AA", "e": "EH", "i": "IY", "o": "OW", "u": "UW",
    "b": "B", "d": "D", "g": "G", "k": "K", "p": "P", "t": "T",
    "s": "S", "z": "Z", "f": "F", "v": "V", "m": "M", "n": "N",
    "l": "L", "r": "R", "w": "W", "h": "HH", "y": "Y",
}

LEXICON = ("bado", "gimu", "sela", "tuno", "kari",
           "pofe", "zawi", "dumo", "nilo", "rehu")

# Per-accent transform tables, cycled for accent ids past the end.
_SHIFTS = (1.0, 0.78, 1.28, 0.88, 1.18, 0.70, 1.38, 0.93)
_RATES = (1.0, 0.85, 1.18, 1.30, 0.80, 1.10, 0.90, 1.22)
_SUBSTITUTIONS = (
    {},
    {"S": "SH", "EH": "AE", "D": "T", "AA": "EH", "OW": "UW"},
    {"Z": "S", "OW": "AA", "T": "D", "IY": "EH", "UW": "OW"},
    {"F": "V", "AA": "AO", "K": "G", "EH": "IY"},
    {"S": "Z", "IY": "EY", "B": "P", "UW": "AA"},
    {"HH": "F", "EH": "IH", "G": "K", "AA": "UW"},
    {"R": "L", "UW": "UH", "P": "B", "OW": "EH"},
    {"W": "V", "OW": "AO", "N": "M", "IY": "AA"},
)

_F1_HZ = {"high": 690.0, "mid": 500.0, "low": 330.0}
_F2_HZ = {"high": 2100.0, "mid": 1400.0, "low": 950.0}
_FRICATIVE_CENTER = {"labiodental": 4300.0, "dental": 4900.0, "alveolar": 6200.0,
                     "postalveolar": 3300.0, "glottal": 1400.0, "na": 2500.0}
_BURST_CENTER = {"bilabial": 700.0, "alveolar": 4200.0, "velar": 1900.0,
                 "glottal": 400.0, "na": 2000.0}
_NASAL_F2 = {"bilabial": 1000.0, "alveolar": 1500.0, "velar": 2000.0, "na": 1300.0}
_GLIDE_FORMANTS = {"labiovelar": (300.0, 750.0), "palatal": (280.0, 2150.0),
                   "alveolar": (360.0, 1300.0), "postalveolar": (310.0, 1060.0),
                   "na": (350.0, 1200.0)}


@dataclass(frozen=True)
class ToyAccentSpec:
    """Ground-truth transform defining one toy accent."""

    accent_id: int
    label: str
    spectral_shift: float
    phone_substitution: dict[int, int] = field(default_factory=dict)
    prosody_rate: float = 1.0

    def __post_init__(self):
        if self.spectral_shift <= 0 or self.prosody_rate <= 0:
            raise DataError("accent factors must be positive")


def toy_accent_specs(num_accents: int,
                     inventory: PhoneInventory | None = None) -> list[ToyAccentSpec]:
    inventory = inventory or default_inventory()
    specs = []
    for k in range(num_accents):
        base = k % len(_SHIFTS)
        # Cycle the tables with a mild extra shift so high ids stay distinct.
        extra = 1.0 + 0.04 * (k // len(_SHIFTS))
        subs = {}
        for src, dst in _SUBSTITUTIONS[base].items():
            try:
                subs[inventory.id_of(src)] = inventory.id_of(dst)
            except DataError:
                continue  # substituted inventory without this label
        specs.append(ToyAccentSpec(
            accent_id=k,
            label=f"acc{k}",
            spectral_shift=_SHIFTS[base] * extra,
            phone_substitution=subs,
            prosody_rate=_RATES[base],
        ))
    return specs


def _shifted(freq: float, shift: float) -> float:
    return float(np.clip(freq * shift, 80.0, 7600.0))


def _envelope(freqs: np.ndarray, f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    tilt = 0.10 / (1.0 + (freqs / 700.0) ** 2)
    r1 = np.exp(-0.5 * ((freqs - f1) / 110.0) ** 2)
    r2 = 0.7 * np.exp(-0.5 * ((freqs - f2) / 180.0) ** 2)
    return tilt + r1 + r2


def _voiced(n: int, f0: np.ndarray, f1_track: np.ndarray, f2_track: np.ndarray,
            amp: float) -> np.ndarray:
    phase = 2.0 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    max_h = min(60, int(7600.0 / max(float(f0.min()), 50.0)))
    out = np.zeros(n)
    for h in range(1, max_h + 1):
        hf = h * f0
        weight = _envelope(hf, f1_track, f2_track)
        weight[hf > 7600.0] = 0.0
        out += weight * np.sin(h * phase)
    peak = np.max(np.abs(out))
    return amp * out / peak if peak > 0 else out


def _noise_band(n: int, center: float, bandwidth: float, amp: float,
                rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(n)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    spectrum *= np.exp(-0.5 * ((freqs - center) / bandwidth) ** 2) + 0.02
    shaped = np.fft.irfft(spectrum, n=n)
    peak = np.max(np.abs(shaped))
    return amp * shaped / peak if peak > 0 else shaped


def _fade(segment: np.ndarray, fade_samples: int = 160) -> np.ndarray:
    k = min(fade_samples, len(segment) // 2)
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
        segment[:k] *= ramp
        segment[-k:] *= ramp[::-1]
    return segment


def _duration_for(feat, rate: float, jitter: float) -> float:
    if feat.type == "vowel":
        base = {"short": 0.11, "long": 0.16, "diphthong": 0.18,
                "reduced": 0.07}.get(feat.duration, 0.12)
    elif feat.type == "fricative":
        base = 0.10
    elif feat.type == "affricate":
        base = 0.12
    elif feat.type == "stop":
        base = 0.075
    elif feat.type == "nasal":
        base = 0.12 if feat.coarticulation == "syllabic" else 0.08
    elif feat.type == "approximant":
        base = 0.08
    else:
        base = 0.09
    return base * rate * jitter


def render_phone(class_id: int, inventory: PhoneInventory, shift: float,
                 f0_curve: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Render one phone segment from its categorical features."""
    feat = inventory.features_of(class_id)
    n = max(len(f0_curve), 32)
    f0 = f0_curve if len(f0_curve) == n else np.full(n, float(np.mean(f0_curve)))

    if feat.type == "silence":
        return np.zeros(n)

    if feat.type == "vowel":
        f1 = _F1_HZ.get(feat.formant1, 500.0)
        f2 = _F2_HZ.get(feat.formant2, 1400.0)
        if feat.roundedness == "rounded":
            f1, f2 = f1 - 40.0, f2 - 180.0
        if feat.articulation == "rhotic":
            f2 -= 250.0
        f1a = f1b = _shifted(f1, shift)
        f2a = f2b = _shifted(f2, shift)
        if feat.duration == "diphthong":
            glide = -350.0 if feat.formant2 == "high" else 350.0
            f2b = _shifted(f2 + glide, shift)
            f1b = _shifted(f1 - 80.0, shift)
        ramp = np.linspace(0.0, 1.0, n)
        amp = 0.8 if feat.duration == "reduced" else 1.0
        seg = _voiced(n, f0, f1a + (f1b - f1a) * ramp, f2a + (f2b - f2a) * ramp, amp)
        return _fade(seg)

    if feat.type == "fricative":
        center = _shifted(_FRICATIVE_CENTER.get(feat.position, 2500.0), shift)
        strong = feat.articulation == "sibilant"
        amp = 0.55 if strong else 0.28
        bw = 900.0 if strong else 1400.0
        seg = _noise_band(n, center, bw, amp, rng)
        if feat.phonation == "voiced":
            hum = _voiced(n, f0, _shifted(250.0, shift), _shifted(900.0, shift), 0.25)
            seg = 0.75 * seg + hum
        return _fade(seg)

    if feat.type == "stop":
        closure = int(0.55 * n)
        seg = np.zeros(n)
        center = _shifted(_BURST_CENTER.get(feat.position, 2000.0), shift)
        burst = _noise_band(n - closure, center, 1200.0, 0.6, rng)
        burst *= np.exp(-np.arange(n - closure) / (0.012 * SAMPLE_RATE))
        if feat.phonation == "voiced":
            hum = _voiced(closure, f0[:closure], _shifted(220.0, shift),
                          np.full(closure, _shifted(700.0, shift)), 0.10)
            seg[:closure] = hum
            burst *= 0.7
        seg[closure:] = burst
        if feat.articulation == "flap":
            seg *= 0.6
        return seg

    if feat.type == "affricate":
        closure = int(0.3 * n)
        center = _shifted(3300.0, shift)
        seg = np.zeros(n)
        seg[closure:] = _noise_band(n - closure, center, 1000.0, 0.5, rng)
        if feat.phonation == "voiced":
            seg[closure:] *= 0.8
        return _fade(seg)

    if feat.type == "nasal":
        f2 = _shifted(_NASAL_F2.get(feat.position, 1300.0), shift)
        seg = _voiced(n, f0, _shifted(250.0, shift), np.full(n, f2), 0.5)
        return _fade(seg)

    # approximants
    f1, f2 = _GLIDE_FORMANTS.get(feat.position, (350.0, 1200.0))
    f1, f2 = _shifted(f1, shift), _shifted(f2, shift)
    if feat.phonation == "unvoiced":
        seg = _noise_band(n, f2, 800.0, 0.25, rng)
    else:
        seg = _voiced(n, f0, f1, np.full(n, f2), 0.7)
    return _fade(seg)


def phones_for_text(text: str, spec: ToyAccentSpec,
                    inventory: PhoneInventory) -> list[int]:
    """Canonical spelling to accent-substituted phone ids; spaces become SIL."""
    sil = inventory.id_of("SIL")
    ids = [sil]
    for ch in text:
        if ch == " ":
            ids.append(sil)
            continue
        if ch not in CHAR_TO_PHONE:
            raise DataError(f"character {ch!r} has no toy phone mapping")
        pid = inventory.id_of(CHAR_TO_PHONE[ch])
        ids.append(spec.phone_substitution.get(pid, pid))
    ids.append(sil)
    return ids


def render_utterance(text: str, spec: ToyAccentSpec, f0_base: float,
                     rng: np.random.Generator,
                     inventory: PhoneInventory | None = None,
                     min_seconds: float = 1.05) -> tuple[AudioClip, PhoneSeq]:
    """Synthesize one utterance; returns audio plus the timed phone sequence."""
    inventory = inventory or default_inventory()
    ids = phones_for_text(text, spec, inventory)
    durations = [
        _duration_for(inventory.features_of(pid), spec.prosody_rate,
                      float(rng.uniform(0.88, 1.12)))
        for pid in ids
    ]
    total = sum(durations)
    f0_utt = f0_base * float(rng.uniform(0.97, 1.03))
    pieces, times = [], []
    cursor = 0.0
    vibrato_phase = float(rng.uniform(0.0, 2 * np.pi))
    for pid, dur in zip(ids, durations):
        n = max(int(round(dur * SAMPLE_RATE)), 32)
        t = cursor + np.arange(n) / SAMPLE_RATE
        f0_curve = f0_utt * (1.0 - 0.06 * t / max(total, 1e-6)) \
            * (1.0 + 0.03 * np.sin(2 * np.pi * 2.1 * t + vibrato_phase))
        pieces.append(render_phone(pid, inventory, spec.spectral_shift,
                                   f0_curve, rng))
        times.append((cursor, cursor + n / SAMPLE_RATE))
        cursor += n / SAMPLE_RATE
    samples = np.concatenate(pieces)
    if len(samples) < int(min_seconds * SAMPLE_RATE):
        pad = int(min_seconds * SAMPLE_RATE) - len(samples)
        samples = np.concatenate([samples, np.zeros(pad)])
    samples = samples + 2e-4 * rng.standard_normal(len(samples))
    samples = 0.4 * samples / max(np.max(np.abs(samples)), 1e-9)
    return AudioClip(samples, SAMPLE_RATE), PhoneSeq(tuple(ids), tuple(times))


def _speaker_f0_bases(num_accents: int, speakers_per_accent: int) -> np.ndarray:
    """Distinct per-speaker bases, balanced so accent means coincide."""
    total = num_accents * speakers_per_accent
    spacing = min(20.0, 170.0 / max(total - 1, 1))
    bases = np.zeros((num_accents, speakers_per_accent))
    for r in range(speakers_per_accent):
        for a in range(num_accents):
            col = a if r % 2 == 0 else num_accents - 1 - a
            slot = r * num_accents + col
            bases[a, r] = 105.0 + spacing * slot
    return bases


def make_toy_corpus(num_accents: int, speakers_per_accent: int,
                    utts_per_speaker: int, rng: np.random.Generator,
                    out_dir, inventory: PhoneInventory | None = None,
                    words_per_utt: tuple[int, int] = (3, 4)) -> list[ManifestEntry]:
    """Generate audio, transcripts, phone annotations, and a manifest."""
    if min(num_accents, speakers_per_accent, utts_per_speaker) < 1:
        raise DataError("all corpus counts must be >= 1")
    inventory = inventory or default_inventory()
    specs = toy_accent_specs(num_accents, inventory)
    bases = _speaker_f0_bases(num_accents, speakers_per_accent)
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    entries, annotations = [], {}
    for spec in specs:
        for s in range(speakers_per_accent):
            speaker = f"spk_a{spec.accent_id}_{s}"
            for u in range(utts_per_speaker):
                lo, hi = words_per_utt
                n_words = int(rng.integers(lo, hi + 1))
                words = [LEXICON[int(rng.integers(0, len(LEXICON)))]
                         for _ in range(n_words)]
                text = " ".join(words)
                utt_id = f"a{spec.accent_id}s{s}u{u:03d}"
                clip, phone_seq = render_utterance(text, spec, bases[spec.accent_id, s],
                                                   rng, inventory)
                rel_path = os.path.join("wav", f"{utt_id}.wav")
                write_wav(os.path.join(out_dir, rel_path), clip)
                annotations[utt_id] = phone_seq
                entries.append(ManifestEntry(
                    utt_id=utt_id, audio_path=rel_path, text=text,
                    accent=spec.label, speaker=speaker, phones_ref=utt_id,
                    origin="real"))
    save_manifest(os.path.join(out_dir, "manifest.jsonl"), entries)
    save_annotations(os.path.join(out_dir, "phones.txt"), annotations, inventory)
    return entries


def split_corpus(entries: list[ManifestEntry],
                 test_utts_per_speaker: int) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Deterministic split: the last N utterances of each speaker go to test."""
    by_speaker: dict[str, list[ManifestEntry]] = {}
    for entry in entries:
        by_speaker.setdefault(entry.speaker, []).append(entry)
    train, test = [], []
    for speaker in sorted(by_speaker):
        group = sorted(by_speaker[speaker], key=lambda e: e.utt_id)
        cut = max(len(group) - test_utts_per_speaker, 1)
        train.extend(group[:cut])
        test.extend(group[cut:])
    return train, test


def mean_mfcc_features(clip: AudioClip, config: MelConfig = MelConfig()) -> np.ndarray:
    """Time-averaged cepstra; duration- and mostly pitch-insensitive."""
    return np.mean(mfcc_with_deltas(clip, config).frames[:, :13], axis=0)


class AccentProbe:
    """Independent linear accent classifier on mean-MFCC features."""

    def __init__(self):
        self._clf = LogisticRegression(max_iter=2000, C=10.0)
        self.labels: list[str] = []

    def fit(self, clips: list[AudioClip], labels: list[str]) -> "AccentProbe":
        feats = np.stack([mean_mfcc_features(c) for c in clips])
        self._clf.fit(feats, labels)
        self.labels = sorted(set(labels))
        return self

    def predict(self, clip: AudioClip) -> str:
        return str(self._clf.predict(mean_mfcc_features(clip)[None, :])[0])

    def accuracy(self, clips: list[AudioClip], labels: list[str]) -> float:
        hits = sum(self.predict(c) == lab for c, lab in zip(clips, labels))
        return hits / max(len(labels), 1)


def train_accent_probe(entries: list[ManifestEntry], base_dir) -> AccentProbe:
    clips = [load_clip(os.path.join(base_dir, e.audio_path)) for e in entries]
    return AccentProbe().fit(clips, [e.accent for e in entries])


def estimate_f0(clip: AudioClip, lo_hz: float = 70.0, hi_hz: float = 350.0) -> float:
    """Autocorrelation pitch estimate over the whole clip."""
    x = clip.samples - np.mean(clip.samples)
    n = len(x)
    spectrum = np.abs(np.fft.rfft(x, n=2 * n)) ** 2
    autocorr = np.fft.irfft(spectrum)[:n]
    lo = int(clip.sample_rate / hi_hz)
    hi = min(int(clip.sample_rate / lo_hz), n - 1)
    lag = lo + int(np.argmax(autocorr[lo:hi]))
    return clip.sample_rate / lag
