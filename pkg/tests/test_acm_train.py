import json
import math
import os

import numpy as np
import pytest
import torch

from accentlab.acm_train import (OptSpec, TrainSchedule, convert,
                                 default_opt_specs, load_acm, lr_at_step,
                                 synthesize_corpus, train_acm)
from accentlab.audio import load_clip
from accentlab.errors import DataError
from accentlab.losses import LossWeights
from accentlab.manifest import ManifestEntry, load_manifest
from accentlab.nets import ModelConfig
from accentlab.phones import load_annotations

TINY_MODEL = ModelConfig(
    num_accents=2, accent_embed_dim=4, acoustic_dim=8,
    acoustic_strides=(5, 4, 4, 2), acoustic_channels=(8, 8, 8),
    generator_upsample=(8, 5, 4), generator_channels=16,
    disc_channels=(4, 8), at_channels=8, at_layers=1, at_heads=2,
    at_ff_dim=16, at_dropout=0.0, content_dim=8, content_layers=1,
    content_heads=2, content_ff_dim=16, wave_rec_strides=(5, 4, 4, 4),
    wave_rec_dim=8, wave_rec_layers=1, wave_rec_heads=2, wave_rec_ff_dim=16,
    repr_dim=4)


def _tiny_schedule(steps=3, warmup=2, batch=2):
    return TrainSchedule(total_steps=steps, at_warmup_steps=warmup,
                         batch_size=batch)


@pytest.fixture(scope="module")
def trained(small_corpus, inventory, tmp_path_factory):
    root, entries = small_corpus
    annotations = load_annotations(os.path.join(root, "phones.txt"), inventory)
    out = tmp_path_factory.mktemp("acm_tiny")
    result = train_acm(entries, root, annotations, TINY_MODEL, LossWeights(),
                       _tiny_schedule(steps=4, warmup=2), seed=3, out_dir=out,
                       inventory=inventory)
    return root, entries, annotations, result


class TestLrSchedule:
    def test_paper_initial_rate(self):
        spec = OptSpec(lr=3e-5, decay_per_step=0.999995)
        assert lr_at_step(spec, 0) == 3e-5

    def test_unit_decay_is_constant(self):
        spec = OptSpec(lr=1e-3, decay_per_step=1.0)
        assert lr_at_step(spec, 123456) == 1e-3

    def test_closed_form_at_200k_steps(self):
        spec = OptSpec(lr=3e-5, decay_per_step=0.999995)
        # Independent evaluation through the exp/log form.
        want = 3e-5 * math.exp(200000 * math.log(0.999995))
        got = lr_at_step(spec, 200000)
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(1.104e-5, rel=1e-3)

    def test_negative_step_rejected(self):
        with pytest.raises(DataError):
            lr_at_step(OptSpec(), -1)

    def test_validation(self):
        with pytest.raises(DataError):
            OptSpec(lr=0.0)
        with pytest.raises(DataError):
            OptSpec(decay_per_step=0.0)


class TestSchedule:
    def test_warmup_bounded_by_total(self):
        with pytest.raises(DataError):
            TrainSchedule(total_steps=10, at_warmup_steps=11)

    def test_missing_optimizer_group(self):
        opts = default_opt_specs()
        del opts["generator"]
        with pytest.raises(DataError):
            TrainSchedule(optimizers=opts)

    def test_round_trip(self):
        schedule = _tiny_schedule(steps=7, warmup=1)
        again = TrainSchedule.from_dict(schedule.to_dict())
        assert again.to_dict() == schedule.to_dict()


class TestTrainingLoop:
    def test_log_records_and_warmup_gate(self, trained):
        _, _, _, result = trained
        lines = [json.loads(l) for l in open(result.log_path)]
        assert len(lines) == 4
        for record in lines[:2]:
            assert "at" not in record["terms"]
            assert record["at_on_generated"] is False
        for record in lines[2:]:
            assert "at" in record["terms"]
            assert "ctc_wave" in record["terms"]
            assert record["at_on_generated"] is True
        for record in lines:
            assert "mel" in record["terms"]
            assert math.isfinite(record["total"])

    def test_checkpoint_round_trip(self, trained):
        _, _, _, result = trained
        models, meta = load_acm(result.checkpoint_paths[-1])
        assert meta["kind"] == "acm"
        assert meta["accent_to_id"] == result.accent_to_id
        assert models.config == TINY_MODEL

    def test_checkpoint_save_load_save_byte_identical(self, trained, tmp_path):
        from accentlab.checkpoint import load_archive, save_archive
        _, _, _, result = trained
        source = result.checkpoint_paths[-1]
        archive = load_archive(source)
        clone = tmp_path / "clone.ckpt"
        save_archive(clone, archive.arrays, archive.config, archive.meta)
        assert clone.read_bytes() == open(source, "rb").read()

    def test_determinism_same_seed(self, small_corpus, inventory, tmp_path):
        root, entries = small_corpus
        annotations = load_annotations(os.path.join(root, "phones.txt"),
                                       inventory)
        logs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            result = train_acm(entries, root, annotations, TINY_MODEL,
                               LossWeights(), _tiny_schedule(steps=3, warmup=3),
                               seed=11, out_dir=out, inventory=inventory)
            records = []
            for line in open(result.log_path):
                record = json.loads(line)
                record.pop("wall_clock")
                records.append(json.dumps(record, sort_keys=True))
            logs.append(records)
        assert logs[0] == logs[1]

    def test_optimizer_isolation_between_player_groups(self, small_corpus,
                                                       inventory, tmp_path):
        # With zero learning rate on one side, that side's parameters must
        # come out bit-identical: the other side's backward passes must not
        # move them.
        root, entries = small_corpus
        annotations = load_annotations(os.path.join(root, "phones.txt"),
                                       inventory)
        frozen = OptSpec(lr=1e-30, decay_per_step=1.0)
        critic_groups = ("realism_disc", "accent_disc", "accent_transformer",
                         "wave_recognizer", "repr_head")

        opts = default_opt_specs()
        for name in critic_groups:
            opts[name] = frozen
        schedule = TrainSchedule(total_steps=2, at_warmup_steps=0, batch_size=2,
                                 optimizers=opts)
        torch.manual_seed(5)
        from accentlab.nets import AcmModels
        reference = AcmModels(TINY_MODEL)
        result = train_acm(entries, root, annotations, TINY_MODEL,
                           LossWeights(), schedule, seed=5,
                           out_dir=tmp_path / "frozen_critics",
                           inventory=inventory)
        for module_name in ("wave_disc", "accent_disc", "accent_transformer",
                            "repr_head"):
            ref = getattr(reference, module_name)
            got = getattr(result.models, module_name)
            for (_, a), (_, b) in zip(ref.named_parameters(),
                                      got.named_parameters()):
                assert torch.allclose(a, b, atol=1e-20), module_name

    def test_empty_manifest_rejected(self, inventory, tmp_path):
        with pytest.raises(DataError):
            train_acm([], tmp_path, {}, TINY_MODEL, LossWeights(),
                      _tiny_schedule(), seed=0, out_dir=tmp_path,
                      inventory=inventory)

    def test_too_many_accents_rejected(self, small_corpus, inventory, tmp_path):
        root, entries = small_corpus
        bad = [ManifestEntry(utt_id=f"x{i}", audio_path=entries[0].audio_path,
                             text="bado", accent=f"zz{i}", speaker="s")
               for i in range(3)]
        with pytest.raises(DataError, match="accents"):
            train_acm(entries + bad, root, {}, TINY_MODEL, LossWeights(),
                      _tiny_schedule(), seed=0, out_dir=tmp_path,
                      inventory=inventory)


class TestConvert:
    def test_length_and_nondegeneracy(self, trained, inventory):
        root, entries, annotations, result = trained
        entry = entries[0]
        clip = load_clip(os.path.join(root, entry.audio_path))
        seq = annotations[entry.phones_ref]
        out0 = convert(clip, 0, result.models, entry.text, seq, inventory)
        out1 = convert(clip, 1, result.models, entry.text, seq, inventory)
        assert len(out0.samples) == len(clip.samples)
        assert len(out1.samples) == len(clip.samples)
        assert not np.array_equal(out0.samples, out1.samples)

    def test_bad_target_accent(self, trained, inventory):
        root, entries, annotations, result = trained
        clip = load_clip(os.path.join(root, entries[0].audio_path))
        with pytest.raises(DataError):
            convert(clip, 9, result.models, entries[0].text)

    def test_missing_checkpoint_errors(self, tmp_path):
        with pytest.raises(DataError):
            load_acm(tmp_path / "missing.ckpt")


class TestSynthesizeCorpus:
    def test_one_output_per_entry_with_lineage(self, trained, tmp_path):
        root, entries, annotations, result = trained
        out = tmp_path / "synth"
        produced = synthesize_corpus(entries, root, annotations, "acc1",
                                     result.checkpoint_paths[-1], out)
        assert len(produced) == len(entries)
        for src, dst in zip(entries, produced):
            assert dst.origin == "synthetic"
            assert dst.accent == "acc1"
            assert dst.speaker == src.speaker
            assert dst.text == src.text
            assert dst.utt_id.startswith(src.utt_id)
            assert os.path.exists(out / dst.audio_path)
        loaded = load_manifest(out / "manifest.jsonl")
        assert [e.utt_id for e in loaded] == [e.utt_id for e in produced]

    def test_rerun_overwrites_deterministically(self, trained, tmp_path):
        root, entries, annotations, result = trained
        out = tmp_path / "synth_twice"
        synthesize_corpus(entries[:2], root, annotations, "acc0",
                          result.checkpoint_paths[-1], out)
        first = {p: (out / "wav" / p).read_bytes()
                 for p in os.listdir(out / "wav")}
        synthesize_corpus(entries[:2], root, annotations, "acc0",
                          result.checkpoint_paths[-1], out)
        second = {p: (out / "wav" / p).read_bytes()
                  for p in os.listdir(out / "wav")}
        assert first == second

    def test_failures_beyond_threshold_raise(self, trained, tmp_path):
        root, entries, annotations, result = trained
        broken = ManifestEntry(utt_id="broken", audio_path="wav/absent.wav",
                               text="bado", accent="acc0", speaker="s0")
        with pytest.raises(DataError, match="broken"):
            synthesize_corpus([broken, *entries], root, annotations, "acc1",
                              result.checkpoint_paths[-1], tmp_path / "s2")

    def test_failures_below_threshold_skipped(self, trained, tmp_path):
        root, entries, annotations, result = trained
        broken = ManifestEntry(utt_id="broken", audio_path="wav/absent.wav",
                               text="bado", accent="acc0", speaker="s0")
        produced = synthesize_corpus(
            [broken, *entries], root, annotations, "acc1",
            result.checkpoint_paths[-1], tmp_path / "s3",
            max_failure_fraction=0.5)
        assert len(produced) == len(entries)

    def test_unknown_accent_rejected(self, trained, tmp_path):
        root, entries, annotations, result = trained
        with pytest.raises(DataError, match="zz"):
            synthesize_corpus(entries, root, annotations, "zz",
                              result.checkpoint_paths[-1], tmp_path / "s4")
