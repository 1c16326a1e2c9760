import numpy as np
import pytest
import torch

from accentlab.audio import AudioClip
from accentlab.errors import DataError
from accentlab.nets import (AcmModels, ModelConfig, accent_discriminator_logits,
                            accent_representation, accent_transformer_logits,
                            build_content_code, chars_to_ids, encode_acoustic,
                            frame_chars, generate, gradient_check_all,
                            phone_logits_content, phone_logits_wave,
                            repeat_to_frames, repr_classify,
                            strided_frame_count)

TINY = ModelConfig(
    num_accents=3, char_alphabet=" ab", accent_embed_dim=4, acoustic_dim=6,
    acoustic_strides=(4, 4), acoustic_channels=(8,), generator_upsample=(4, 4),
    generator_channels=16, disc_channels=(8, 8), at_channels=8, at_layers=1,
    at_heads=2, at_ff_dim=16, at_dropout=0.0, content_dim=8, content_layers=1,
    content_heads=2, content_ff_dim=16, wave_rec_strides=(4, 4), wave_rec_dim=8,
    wave_rec_layers=1, wave_rec_heads=2, wave_rec_ff_dim=16, num_phones=5,
    repr_dim=4)


@pytest.fixture(scope="module")
def tiny_models():
    torch.manual_seed(0)
    return AcmModels(TINY).eval()


@pytest.fixture(scope="module")
def default_models():
    torch.manual_seed(0)
    return AcmModels(ModelConfig()).eval()


class TestModelConfig:
    def test_paper_shape_defaults(self):
        config = ModelConfig()
        assert config.at_channels == 96
        assert config.at_layers == 10
        assert config.at_ff_dim == 384
        assert config.at_dropout == 0.1
        assert config.content_layers == 10
        assert config.content_heads == 4
        assert config.content_ff_dim == 128
        assert config.num_phones == 51

    def test_upsample_must_match_stride(self):
        with pytest.raises(DataError):
            ModelConfig(generator_upsample=(8, 5, 2))

    def test_num_accents_minimum(self):
        with pytest.raises(DataError):
            ModelConfig(num_accents=1)

    def test_content_width(self):
        config = ModelConfig(char_alphabet="abcdefghijklmnopqrstuvwxyz 012",
                             accent_embed_dim=16)
        assert config.alphabet_size == 30
        assert config.content_width == 46

    def test_json_round_trip(self):
        config = ModelConfig(num_accents=4, generator_upsample=(4, 5, 8))
        again = ModelConfig.from_json(config.to_json())
        assert again == config


class TestAcousticEncoder:
    def test_one_second_gives_100_frames(self, default_models):
        clip = AudioClip(np.full(16000, 0.05), 16000)
        feats = encode_acoustic(default_models, clip)
        assert feats.shape == (100, 128)

    def test_ceil_framing(self):
        assert strided_frame_count(16000, (5, 4, 4, 2)) == 100
        assert strided_frame_count(16001, (5, 4, 4, 2)) == 101
        assert strided_frame_count(159, (5, 4, 4, 2)) == 1

    def test_no_cross_item_coupling(self, tiny_models):
        wave = torch.randn(1, 64)
        double = torch.cat([wave, wave], dim=0)
        out = tiny_models.acoustic_encoder(double)
        assert torch.equal(out[0], out[1])

    def test_output_dim_follows_config(self, tiny_models):
        out = tiny_models.acoustic_encoder(torch.randn(2, 64))
        assert out.shape[-1] == TINY.acoustic_dim


class TestContentCode:
    def test_width_is_alphabet_plus_embedding(self, default_models):
        chars = chars_to_ids("bad bad", default_models.config)
        code = build_content_code(default_models, chars, 1)
        assert code.shape == (7, 27 + 16)

    def test_accent_changes_only_embedding_block(self, default_models):
        chars = chars_to_ids("abba", default_models.config)
        a = build_content_code(default_models, chars, 0)
        b = build_content_code(default_models, chars, 1)
        c_width = default_models.config.alphabet_size
        assert np.array_equal(a[:, :c_width], b[:, :c_width])
        assert not np.allclose(a[:, c_width:], b[:, c_width:])

    def test_embedding_lookup_identity(self, default_models):
        chars = chars_to_ids("a", default_models.config)
        code = build_content_code(default_models, chars, 0)
        table_row = default_models.content_builder.embedding.weight[0]
        assert np.allclose(code[0, default_models.config.alphabet_size:],
                           table_row.detach().numpy())

    def test_one_hot_rows_sum_to_one(self, default_models):
        chars = chars_to_ids("hello world", default_models.config)
        code = build_content_code(default_models, chars, 2)
        assert np.allclose(code[:, :27].sum(axis=1), 1.0)

    def test_out_of_range_ids(self, default_models):
        with pytest.raises(DataError):
            build_content_code(default_models, [999], 0)
        with pytest.raises(DataError):
            build_content_code(default_models, [0], 99)


class TestGenerator:
    def test_length_is_frames_times_upsample(self, default_models):
        frames = 100
        content = np.zeros((frames, default_models.config.content_width),
                           dtype=np.float32)
        content[:, 0] = 1.0
        acoustic = np.zeros((frames, 128), dtype=np.float32)
        clip = generate(default_models, content, acoustic)
        assert len(clip.samples) == 16000

    def test_untrained_output_bounded(self, tiny_models):
        content = np.random.default_rng(0).normal(
            size=(12, TINY.content_width)).astype(np.float32)
        acoustic = np.random.default_rng(1).normal(size=(12, 6)).astype(np.float32)
        clip = generate(tiny_models, content, acoustic)
        assert np.all(np.isfinite(clip.samples))
        assert np.all(np.abs(clip.samples) <= 1.0)
        assert len(clip.samples) == 12 * 16

    def test_misaligned_frames_rejected(self, tiny_models):
        content = np.zeros((10, TINY.content_width), dtype=np.float32)
        acoustic = np.zeros((11, 6), dtype=np.float32)
        with pytest.raises(DataError):
            generate(tiny_models, content, acoustic)

    def test_deterministic(self, tiny_models):
        rng = np.random.default_rng(2)
        content = rng.normal(size=(8, TINY.content_width)).astype(np.float32)
        acoustic = rng.normal(size=(8, 6)).astype(np.float32)
        a = generate(tiny_models, content, acoustic).samples
        b = generate(tiny_models, content, acoustic).samples
        assert np.array_equal(a, b)


class TestCritics:
    def test_accent_disc_output_dim(self, tiny_models):
        feats = np.random.default_rng(0).normal(size=(20, 6))
        logits = accent_discriminator_logits(tiny_models, feats)
        assert logits.shape == (3,)

    def test_accent_disc_batch_permutation(self, tiny_models):
        feats = torch.randn(4, 20, 6)
        out = tiny_models.accent_disc(feats)
        perm = torch.tensor([2, 0, 3, 1])
        out_perm = tiny_models.accent_disc(feats[perm])
        assert torch.allclose(out[perm], out_perm, atol=1e-6)

    def test_accent_transformer_projects_to_96_channels(self, default_models):
        assert default_models.accent_transformer.proj.in_features == 39
        assert default_models.accent_transformer.proj.out_features == 96

    def test_accent_transformer_accepts_length_one(self, tiny_models):
        logits = accent_transformer_logits(tiny_models, np.zeros((1, 39)))
        assert logits.shape == (3,)

    def test_accent_transformer_rejects_wrong_width(self, tiny_models):
        with pytest.raises(DataError):
            accent_transformer_logits(tiny_models, np.zeros((5, 40)))


class TestPhoneRecognizers:
    def test_wave_logits_contract(self, default_models):
        clip = AudioClip(np.random.default_rng(0).normal(scale=0.1, size=16000),
                         16000)
        logp = phone_logits_wave(default_models, clip)
        assert logp.shape == (50, 52)  # ceil(16000 / 320) frames, 51 + blank
        assert np.allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-5)

    def test_wave_length_formula(self, tiny_models):
        for n in (33, 64, 100, 257):
            clip = AudioClip(np.full(n, 0.01), 16000)
            logp = phone_logits_wave(tiny_models, clip)
            assert logp.shape[0] == strided_frame_count(n, TINY.wave_rec_strides)

    def test_content_logits_contract(self, tiny_models):
        code = np.random.default_rng(1).normal(size=(17, TINY.content_width))
        logp = phone_logits_content(tiny_models, code)
        assert logp.shape == (17, TINY.num_phones + 1)
        assert np.allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-5)


class TestRepresentation:
    def test_dimension_follows_config(self, tiny_models):
        clip = AudioClip(np.full(640, 0.05), 16000)
        rep = accent_representation(tiny_models, clip)
        assert rep.shape == (TINY.repr_dim,)
        logits = repr_classify(tiny_models, rep)
        assert logits.shape == (TINY.num_accents,)

    def test_mean_pooling_is_order_invariant(self, tiny_models):
        wave = torch.randn(1, 640) * 0.1
        states = tiny_models.wave_recognizer.encoder_states(wave)
        pooled = states.mean(dim=1)
        pooled_reversed = states.flip(dims=(1,)).mean(dim=1)
        assert torch.allclose(pooled, pooled_reversed, atol=1e-6)
        rep_a = tiny_models.repr_head(pooled)
        rep_b = tiny_models.repr_head(pooled_reversed)
        assert torch.allclose(rep_a, rep_b, atol=1e-6)


class TestFrameAlignment:
    def test_nearest_neighbor_repetition(self):
        assert repeat_to_frames([7, 8], 4) == [7, 7, 8, 8]
        assert repeat_to_frames([1, 2, 3], 6) == [1, 1, 2, 2, 3, 3]
        assert repeat_to_frames([1, 2, 3, 4], 2) == [1, 3]

    def test_plain_text_stretch(self):
        config = ModelConfig()
        chars = frame_chars("ab", 6, config)
        ids = chars_to_ids("ab", config)
        assert chars == [ids[0]] * 3 + [ids[1]] * 3

    def test_annotation_alignment_uses_times(self, inventory):
        config = ModelConfig()
        seq = inventory.parse_annotation(
            "SIL:0.0:0.1 B:0.1:0.2 AA:0.2:0.5 SIL:0.5:0.6")
        chars = frame_chars("ba", 60, config, seq, inventory, frame_rate=100.0)
        space = config.char_id(" ")
        b, a = config.char_id("b"), config.char_id("a")
        assert chars[:10] == [space] * 10
        assert chars[10:20] == [b] * 10
        assert chars[20:50] == [a] * 30
        assert chars[50:] == [space] * 10


def test_shape_contracts_randomized_lengths(tiny_models):
    rng = np.random.default_rng(5)
    for _ in range(5):
        frames = int(rng.integers(10, 400))
        content = rng.normal(size=(frames, TINY.content_width)).astype(np.float32)
        acoustic = rng.normal(size=(frames, 6)).astype(np.float32)
        clip = generate(tiny_models, content, acoustic)
        assert len(clip.samples) == frames * 16
        assert np.all(np.isfinite(clip.samples))
        logp = phone_logits_content(tiny_models, content)
        assert logp.shape[0] == frames


def test_gradient_checks_all_networks():
    for name, err in gradient_check_all(seed=1, instances=2, entries=2):
        assert err < 1e-4, f"{name}: rel err {err}"
