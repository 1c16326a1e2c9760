import itertools
import math

import numpy as np
import pytest
import torch

from accentlab.audio import AudioClip
from accentlab.errors import DataError, InfeasibleTargetError, NumericError
from accentlab.losses import (LossWeights, accent_ce_loss, ctc_loss,
                              ctc_loss_batch, ctc_min_frames, disentangle_loss,
                              gan_realism_losses, l1_mel_loss, mel_l1,
                              total_generator_loss, transducer_loss,
                              transducer_loss_batch, weighted_total)
from accentlab.oracles import (central_difference_check, ctc_brute_force,
                               ctc_enumerate, random_log_probs,
                               transducer_brute_force)

RNG = np.random.default_rng(2024)


class TestMelLoss:
    def test_identity_is_exactly_zero(self, noise_clip):
        assert l1_mel_loss(noise_clip, noise_clip) == 0.0

    def test_hand_fixture_half(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[1.0, 1.0], [4.0, 4.0]])
        assert float(mel_l1(a, b)) == pytest.approx(0.5)

    def test_symmetry(self, noise_clip, tone_clip):
        assert l1_mel_loss(noise_clip, tone_clip) == \
            pytest.approx(l1_mel_loss(tone_clip, noise_clip))

    def test_length_mismatch(self, noise_clip):
        short = AudioClip(noise_clip.samples[:8000], 16000)
        with pytest.raises(DataError):
            l1_mel_loss(noise_clip, short)

    def test_nonnegative(self, noise_clip, tone_clip):
        assert l1_mel_loss(noise_clip, tone_clip) >= 0.0


class TestAccentCe:
    def test_uniform_logits(self):
        assert float(accent_ce_loss(torch.zeros(4), 2)) == pytest.approx(math.log(4))

    def test_confident_logit_drives_to_zero(self):
        logits = torch.zeros(4)
        logits[1] = 50.0
        assert float(accent_ce_loss(logits, 1)) < 1e-6

    def test_matches_log_sum_exp_oracle(self):
        for _ in range(100):
            logits = RNG.normal(size=6)
            target = int(RNG.integers(0, 6))
            want = math.log(sum(math.exp(v) for v in logits)) - logits[target]
            got = float(accent_ce_loss(torch.tensor(logits), target))
            assert got == pytest.approx(want, abs=1e-10)

    def test_target_range(self):
        with pytest.raises(DataError):
            accent_ce_loss(torch.zeros(3), 3)


class TestDisentangle:
    def test_uniform_is_global_minimum(self):
        n = 5
        assert float(disentangle_loss(torch.zeros(n))) == pytest.approx(-math.log(n))

    def test_one_hot_approaches_zero(self):
        logits = torch.zeros(5)
        logits[0] = 60.0
        assert abs(float(disentangle_loss(logits))) < 1e-6

    def test_gradient_matches_finite_differences(self):
        for _ in range(5):
            x = torch.tensor(RNG.normal(size=6), dtype=torch.float64)
            err = central_difference_check(disentangle_loss, x, 4, RNG)
            assert err < 1e-4


class TestGanLosses:
    def test_perfect_discriminator(self):
        d, _ = gan_realism_losses(torch.ones(3), torch.zeros(3))
        assert float(d) == 0.0

    def test_fooled_discriminator_zeroes_generator(self):
        _, g = gan_realism_losses(torch.zeros(3), torch.ones(3))
        assert float(g) == 0.0

    def test_matches_hand_formula(self):
        real = torch.tensor(RNG.normal(size=8))
        fake = torch.tensor(RNG.normal(size=8))
        d, g = gan_realism_losses(real, fake)
        want_d = float(((real - 1) ** 2).mean() + (fake ** 2).mean())
        want_g = float(((fake - 1) ** 2).mean())
        assert float(d) == pytest.approx(want_d, abs=1e-12)
        assert float(g) == pytest.approx(want_g, abs=1e-12)


class TestCtcLoss:
    def test_single_frame_single_label(self):
        lp = torch.tensor(random_log_probs((1, 4), RNG))
        assert float(ctc_loss(lp, [2], 3)) == pytest.approx(-float(lp[0, 2]))

    def test_repeat_needs_blank_frame(self):
        lp = torch.tensor(random_log_probs((2, 4), RNG))
        with pytest.raises(InfeasibleTargetError):
            ctc_loss(lp, [1, 1], 3)
        sentinel = ctc_loss(lp, [1, 1], 3, on_infeasible="inf")
        assert math.isinf(float(sentinel))

    def test_exhaustive_enumeration_agreement(self):
        blank = 3
        for t_len in range(1, 7):
            lp = random_log_probs((t_len, 4), RNG)
            table = ctc_enumerate(lp, blank)
            for length in range(0, 4):
                for tgt in itertools.product(range(3), repeat=length):
                    if ctc_min_frames(tgt) > t_len:
                        continue
                    got = float(ctc_loss(torch.tensor(lp), tgt, blank))
                    want = -math.log(table[tgt])
                    assert got == pytest.approx(want, abs=1e-6)

    def test_blank_in_target_rejected(self):
        lp = torch.tensor(random_log_probs((3, 4), RNG))
        with pytest.raises(DataError):
            ctc_loss(lp, [3], 3)

    def test_degenerate_blankless_case_is_cross_entropy(self):
        # T == |target|, blank probability pushed to ~0: the only
        # alignment is the target itself, frame by frame.
        t_len = 4
        raw = RNG.normal(size=(t_len, 5))
        raw[:, 4] = -40.0
        lp = torch.tensor(raw - np.log(np.exp(raw).sum(axis=1, keepdims=True)))
        target = [0, 1, 2, 3]
        want = -sum(float(lp[t, target[t]]) for t in range(t_len))
        got = float(ctc_loss(lp, target, 4))
        assert got == pytest.approx(want, abs=1e-5)

    def test_nonnegative(self):
        for _ in range(10):
            lp = torch.tensor(random_log_probs((5, 4), RNG))
            assert float(ctc_loss(lp, [0, 1], 3)) >= 0.0

    def test_gradients_match_finite_differences(self):
        for _ in range(10):
            x = torch.tensor(RNG.normal(size=(5, 4)), dtype=torch.float64)
            err = central_difference_check(
                lambda z: ctc_loss(torch.log_softmax(z, dim=-1), [0, 1, 0], 3),
                x, 4, RNG)
            assert err < 1e-4

    def test_batch_matches_per_item(self):
        lp = torch.tensor(random_log_probs((6, 9, 5), RNG))
        targets = [[0, 1], [2], [], [3, 3, 1], [1, 2, 3, 0, 1, 2, 3, 2, 1], [0]]
        mean, used = ctc_loss_batch(lp, targets, 4)
        finite = []
        for b in range(6):
            value = ctc_loss(lp[b], targets[b], 4, on_infeasible="inf")
            if torch.isfinite(value):
                finite.append(float(value))
        assert used == len(finite)
        assert float(mean) == pytest.approx(np.mean(finite), abs=1e-9)


class TestTransducerLoss:
    def test_single_node_is_blank_logprob(self):
        joint = torch.tensor(random_log_probs((1, 1, 3), RNG))
        assert float(transducer_loss(joint, [], 2)) == \
            pytest.approx(-float(joint[0, 0, 2]))

    def test_certain_blank_path_gives_zero(self):
        joint = torch.full((3, 1, 3), -50.0)
        joint[:, :, 2] = 0.0
        assert float(transducer_loss(joint, [], 2)) == pytest.approx(0.0, abs=1e-6)

    def test_exhaustive_enumeration_agreement(self):
        for t_len in range(1, 4):
            for u_len in range(1, 4):
                for _ in range(6):
                    joint = random_log_probs((t_len, u_len, 3), RNG)
                    tgt = [int(RNG.integers(0, 2)) for _ in range(u_len - 1)]
                    got = float(transducer_loss(torch.tensor(joint), tgt, 2))
                    want = transducer_brute_force(joint, tgt, 2)
                    assert got == pytest.approx(want, abs=1e-6)

    def test_empty_encoder_rejected(self):
        with pytest.raises(DataError):
            transducer_loss(torch.zeros((0, 1, 3)), [], 2)

    def test_nonnegative(self):
        for _ in range(10):
            joint = torch.tensor(random_log_probs((3, 2, 3), RNG))
            assert float(transducer_loss(joint, [1], 2)) >= 0.0

    def test_gradients_match_finite_differences(self):
        for _ in range(10):
            x = torch.tensor(RNG.normal(size=(3, 3, 4)), dtype=torch.float64)
            err = central_difference_check(
                lambda z: transducer_loss(torch.log_softmax(z, dim=-1),
                                          [0, 1], 3),
                x, 4, RNG)
            assert err < 1e-4

    def test_batch_matches_per_item_on_ragged_sizes(self):
        joint = torch.tensor(random_log_probs((4, 7, 5, 4), RNG))
        targets = [[0, 1, 2], [1], [], [2, 0, 1, 2]]
        t_lens = [7, 3, 5, 4]
        batched = transducer_loss_batch(joint, targets, t_lens, 3)
        for i in range(4):
            single = transducer_loss(
                joint[i, :t_lens[i], :len(targets[i]) + 1], targets[i], 3)
            assert float(batched[i]) == pytest.approx(float(single), abs=1e-9)


def test_losses_decrease_when_overfitting_tiny_example():
    # Both sequence losses must fall monotonically (5-step plateaus allowed)
    # when a single tiny example is optimized directly.
    torch.manual_seed(0)
    logits = torch.randn(6, 4, requires_grad=True)
    opt = torch.optim.Adam([logits], lr=0.05)
    history = []
    for _ in range(200):
        opt.zero_grad()
        loss = ctc_loss(torch.log_softmax(logits, dim=-1), [0, 1, 2], 3)
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    assert all(history[i + 5] <= history[i] + 1e-9
               for i in range(len(history) - 5))

    joint_logits = torch.randn(3, 3, 3, requires_grad=True)
    opt = torch.optim.Adam([joint_logits], lr=0.05)
    history = []
    for _ in range(200):
        opt.zero_grad()
        loss = transducer_loss(torch.log_softmax(joint_logits, dim=-1), [0, 1], 2)
        loss.backward()
        opt.step()
        history.append(float(loss.detach()))
    assert all(history[i + 5] <= history[i] + 1e-9
               for i in range(len(history) - 5))


class TestTotalLoss:
    def test_single_term(self):
        weights = LossWeights(w_mel=1.0, w_at=0.0, w_ctc_wave=0.0,
                              w_ctc_content=0.0, w_adv_disentangle=0.0,
                              w_gan=0.0)
        report = total_generator_loss({"mel": 3.25}, weights)
        assert report.total == 3.25

    def test_doubling_weights_doubles_total(self):
        terms = {"mel": 1.5, "gan": 0.25, "at": 2.0}
        one = total_generator_loss(terms, LossWeights())
        two = total_generator_loss(
            terms, LossWeights(w_mel=90.0, w_at=2.0, w_ctc_wave=2.0,
                               w_ctc_content=2.0, w_adv_disentangle=2.0,
                               w_gan=2.0))
        assert two.total == pytest.approx(2 * one.total, rel=1e-12)

    def test_recomputation_is_exact(self):
        for _ in range(20):
            terms = {name: float(RNG.normal())
                     for name in ("mel", "at", "ctc_wave", "gan")}
            report = total_generator_loss(terms, LossWeights())
            assert report.total == report.recompute_total()

    def test_non_finite_term_named(self):
        with pytest.raises(NumericError, match="ctc_wave"):
            total_generator_loss({"mel": 1.0, "ctc_wave": float("nan")},
                                 LossWeights())

    def test_weighted_total_matches_report(self):
        terms = {"mel": torch.tensor(2.0), "gan": torch.tensor(0.5)}
        weights = LossWeights()
        tensor_total = float(weighted_total(terms, weights))
        report = total_generator_loss({k: float(v) for k, v in terms.items()},
                                      weights)
        assert tensor_total == pytest.approx(report.total, rel=1e-7)

    def test_w_mel_must_be_positive(self):
        with pytest.raises(DataError):
            LossWeights(w_mel=0.0)
