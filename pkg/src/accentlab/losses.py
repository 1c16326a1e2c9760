"""Training objectives: reconstruction, classification, CTC, adversarial,
GAN realism, transducer, and the weighted generator total.

All losses are torch expressions so gradients flow wherever the training
loop needs them; convenience wrappers accept numpy/audio types at the API
boundary. CTC and transducer losses are exact log-space lattice DPs and
are checked against brute-force path enumeration (see `oracles`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
import torch

from .audio import AudioClip
from .errors import DataError, InfeasibleTargetError, NumericError
from .features import MelConfig
from .torchdsp import TorchMel

NEG_INF = float("-inf")
LOG_ZERO = -1.0e30  # finite stand-in for log 0 inside lattice DPs


# ---------------------------------------------------------------------------
# reconstruction


def mel_l1(mel_a, mel_b):
    """Mean absolute difference of two equal-shape mel matrices."""
    a = torch.as_tensor(mel_a)
    b = torch.as_tensor(mel_b)
    if a.shape != b.shape:
        raise DataError(f"mel shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.mean(torch.abs(a - b))


def mel_reconstruction_loss(wave_real: torch.Tensor, wave_fake: torch.Tensor,
                            mel: TorchMel) -> torch.Tensor:
    """Differentiable waveform-domain form of the mel reconstruction error."""
    if wave_real.shape != wave_fake.shape:
        raise DataError(f"waveform lengths differ: {tuple(wave_real.shape)} vs "
                        f"{tuple(wave_fake.shape)}")
    return mel_l1(mel(wave_real), mel(wave_fake))


def l1_mel_loss(x: AudioClip, x_hat: AudioClip,
                config: MelConfig = MelConfig()) -> float:
    """Mean L1 distance between the 80-band log mel matrices of two clips."""
    if len(x.samples) != len(x_hat.samples):
        raise DataError(f"clip lengths differ: {len(x.samples)} vs "
                        f"{len(x_hat.samples)}")
    mel = TorchMel(config, dtype=torch.float64)
    a = torch.as_tensor(x.samples, dtype=torch.float64)
    b = torch.as_tensor(x_hat.samples, dtype=torch.float64)
    return float(mel_l1(mel(a), mel(b)))


# ---------------------------------------------------------------------------
# classification and adversarial terms


def accent_ce_loss(logits: torch.Tensor, target: int) -> torch.Tensor:
    """Cross entropy -log softmax(logits)[target] for one logit vector."""
    logits = torch.as_tensor(logits)
    if logits.dim() != 1:
        raise DataError(f"expected a logit vector, got shape {tuple(logits.shape)}")
    if not 0 <= target < logits.shape[0]:
        raise DataError(f"target {target} out of range for {logits.shape[0]} classes")
    return torch.logsumexp(logits, dim=0) - logits[target]


def disentangle_loss(logits: torch.Tensor) -> torch.Tensor:
    """Negative softmax entropy; minimal when the classifier is uncertain."""
    logits = torch.as_tensor(logits)
    log_p = logits - torch.logsumexp(logits, dim=-1, keepdim=True)
    return torch.sum(torch.exp(log_p) * log_p, dim=-1).mean()


def gan_realism_losses(disc_real: torch.Tensor,
                       disc_fake: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares GAN objectives: (discriminator loss, generator loss)."""
    disc_real = torch.as_tensor(disc_real)
    disc_fake = torch.as_tensor(disc_fake)
    d_loss = torch.mean((disc_real - 1.0) ** 2) + torch.mean(disc_fake ** 2)
    g_loss = torch.mean((disc_fake - 1.0) ** 2)
    return d_loss, g_loss


# ---------------------------------------------------------------------------
# CTC


def ctc_min_frames(target: Sequence[int]) -> int:
    """Minimum frames for a valid alignment: one per label plus one per repeat."""
    repeats = sum(1 for i in range(1, len(target)) if target[i] == target[i - 1])
    return len(target) + repeats


def ctc_loss(log_probs: torch.Tensor, target: Sequence[int], blank: int,
             on_infeasible: str = "error") -> torch.Tensor:
    """Forward-DP CTC negative log likelihood in log space.

    `log_probs` is (T, V+1) with log-normalized rows and blank at index
    `blank`. Infeasible targets raise by default; pass
    `on_infeasible="inf"` to get a +inf sentinel for batch filtering.
    """
    log_probs = torch.as_tensor(log_probs)
    if log_probs.dim() != 2:
        raise DataError(f"log_probs must be (T, V+1), got {tuple(log_probs.shape)}")
    tgt = [int(v) for v in target]
    if any(v == blank for v in tgt):
        raise DataError("CTC target must not contain the blank id")
    if any(not 0 <= v < log_probs.shape[1] for v in tgt):
        raise DataError("CTC target id outside logit width")
    t_len = log_probs.shape[0]
    if ctc_min_frames(tgt) > t_len:
        if on_infeasible == "inf":
            return torch.tensor(float("inf"), dtype=log_probs.dtype)
        raise InfeasibleTargetError(
            f"target of {len(tgt)} labels needs >= {ctc_min_frames(tgt)} frames, "
            f"got {t_len}")

    # Blank-augmented state sequence: blank, y0, blank, y1, ..., blank.
    # A very negative finite sentinel stands in for log 0: literal -inf
    # produces NaN gradients through logaddexp on unreachable states.
    sym = torch.full((2 * len(tgt) + 1,), blank, dtype=torch.long)
    if tgt:
        sym[1::2] = torch.tensor(tgt, dtype=torch.long)
    skip_ok = torch.zeros(sym.shape[0], dtype=torch.bool)
    for s in range(3, sym.shape[0], 2):
        skip_ok[s] = sym[s] != sym[s - 2]

    num_states = sym.shape[0]
    floor = torch.tensor(LOG_ZERO, dtype=log_probs.dtype)
    neg = torch.full((2,), LOG_ZERO, dtype=log_probs.dtype)
    head = log_probs[0, sym[:2]] if tgt else log_probs[0, sym[:1]]
    alpha = torch.cat([head, torch.full((num_states - head.shape[0],), LOG_ZERO,
                                        dtype=log_probs.dtype)])
    for t in range(1, t_len):
        stay = alpha
        step = torch.cat([neg[:1], alpha])[:num_states]
        skip = torch.cat([neg, alpha])[:num_states]
        skip = torch.where(skip_ok, skip, floor)
        alpha = log_probs[t, sym] + torch.logaddexp(torch.logaddexp(stay, step), skip)
    tail = alpha[-2:] if tgt else alpha[-1:]
    return -torch.logsumexp(tail, dim=0)


def ctc_loss_batch(log_probs: torch.Tensor, targets: Sequence[Sequence[int]],
                   blank: int) -> tuple[torch.Tensor, int]:
    """Mean CTC over a batch sharing one frame count; one vectorized DP.

    Items whose target cannot be aligned in the available frames are
    skipped; returns (mean over feasible items, feasible count). Equal to
    averaging `ctc_loss` per item, but with a single (B, S) lattice sweep.
    """
    if log_probs.dim() != 3:
        raise DataError(f"expected (B, T, V+1) log probs, got {tuple(log_probs.shape)}")
    batch, t_len, _ = log_probs.shape
    if len(targets) != batch:
        raise DataError("targets must align with the batch")
    feasible = [b for b in range(batch)
                if ctc_min_frames(targets[b]) <= t_len
                and all(v != blank for v in targets[b])]
    if not feasible:
        return log_probs.new_zeros(()), 0
    lp = log_probs[feasible]
    tgts = [list(map(int, targets[b])) for b in feasible]
    n = len(tgts)
    max_len = max(len(t) for t in tgts)
    num_states = 2 * max_len + 1

    sym = torch.full((n, num_states), blank, dtype=torch.long)
    skip_ok = torch.zeros((n, num_states), dtype=torch.bool)
    for i, tgt in enumerate(tgts):
        for j, v in enumerate(tgt):
            sym[i, 2 * j + 1] = v
        for s in range(3, 2 * len(tgt) + 1, 2):
            skip_ok[i, s] = sym[i, s] != sym[i, s - 2]

    floor = torch.tensor(LOG_ZERO, dtype=lp.dtype)
    first = lp[:, 0, :].gather(1, sym)
    alpha = torch.where(
        torch.arange(num_states)[None, :] < 2, first,
        floor)
    pad1 = torch.full((n, 1), LOG_ZERO, dtype=lp.dtype)
    for t in range(1, t_len):
        stay = alpha
        step = torch.cat([pad1, alpha[:, :-1]], dim=1)
        skip = torch.cat([pad1, pad1, alpha[:, :-2]], dim=1)
        skip = torch.where(skip_ok, skip, floor)
        alpha = lp[:, t, :].gather(1, sym) \
            + torch.logaddexp(torch.logaddexp(stay, step), skip)
    ends = torch.tensor([2 * len(t) for t in tgts])
    last = alpha.gather(1, ends[:, None]).squeeze(1)
    prev = alpha.gather(1, torch.clamp(ends - 1, min=0)[:, None]).squeeze(1)
    prev = torch.where(ends > 0, prev, floor)
    return -torch.logaddexp(last, prev).mean(), n


# ---------------------------------------------------------------------------
# transducer


def transducer_loss(joint_log_probs: torch.Tensor, target: Sequence[int],
                    blank: int) -> torch.Tensor:
    """Forward DP over the (T, U) transducer lattice in log space.

    `joint_log_probs` is (T, U, V+1) with U = len(target) + 1; entry
    [t, u] is the joiner's log distribution after t frames and u emitted
    labels; blank advances time, `target[u]` advances the label axis.
    """
    joint = torch.as_tensor(joint_log_probs)
    if joint.dim() != 3:
        raise DataError(f"joint must be (T, U, V+1), got {tuple(joint.shape)}")
    t_len, u_len, width = joint.shape
    if t_len == 0:
        raise DataError("empty encoder output")
    tgt = [int(v) for v in target]
    if len(tgt) != u_len - 1:
        raise DataError(f"target length {len(tgt)} != U-1 = {u_len - 1}")
    if any(not 0 <= v < width or v == blank for v in tgt):
        raise DataError("transducer target id invalid")

    emit = (joint[:, :-1, :].gather(
        2, torch.tensor(tgt).view(1, -1, 1).expand(t_len, -1, 1)).squeeze(2)
        if tgt else joint.new_zeros((t_len, 0)))
    blanks = joint[:, :, blank]

    # Wavefront over anti-diagonals d = t + u; each depends only on d - 1.
    floor = torch.tensor(LOG_ZERO, dtype=joint.dtype)
    alpha = torch.full((t_len, u_len), LOG_ZERO, dtype=joint.dtype)
    alpha[0, 0] = 0.0
    for d in range(1, t_len + u_len - 1):
        t_lo = max(0, d - (u_len - 1))
        t_hi = min(d, t_len - 1)
        ts = torch.arange(t_lo, t_hi + 1)
        us = d - ts
        from_time = torch.where(
            ts > 0,
            alpha[(ts - 1).clamp(min=0), us] + blanks[(ts - 1).clamp(min=0), us],
            floor)
        if tgt:
            from_label = torch.where(
                us > 0,
                alpha[ts, (us - 1).clamp(min=0)]
                + emit[ts, (us - 1).clamp(min=0)],
                floor)
        else:
            from_label = torch.full_like(from_time, LOG_ZERO)
        alpha = alpha.index_put((ts, us), torch.logaddexp(from_time, from_label))
    return -(alpha[t_len - 1, u_len - 1] + blanks[t_len - 1, u_len - 1])


def transducer_loss_batch(joint_log_probs: torch.Tensor,
                          targets: Sequence[Sequence[int]],
                          t_lens: Sequence[int], blank: int) -> torch.Tensor:
    """Per-item transducer losses over a padded (B, T, U, V+1) lattice.

    Item i uses frames [0, t_lens[i]) and labels targets[i]; padding cells
    are computed but never read, since every valid cell's predecessors are
    themselves valid. Matches `transducer_loss` item by item.
    """
    joint = torch.as_tensor(joint_log_probs)
    if joint.dim() != 4:
        raise DataError(f"joint must be (B, T, U, V+1), got {tuple(joint.shape)}")
    batch, t_max, u_max, width = joint.shape
    if len(targets) != batch or len(t_lens) != batch:
        raise DataError("targets and t_lens must align with the batch")
    u_lens = [len(t) + 1 for t in targets]
    if max(u_lens) > u_max or max(t_lens) > t_max:
        raise DataError("stated lengths exceed the lattice extent")
    if min(t_lens) < 1:
        raise DataError("empty encoder output")

    tgt_pad = torch.zeros((batch, max(u_max - 1, 1)), dtype=torch.long)
    for i, tgt in enumerate(targets):
        for j, v in enumerate(tgt):
            if not 0 <= v < width or v == blank:
                raise DataError("transducer target id invalid")
            tgt_pad[i, j] = v
    if u_max > 1:
        emit = joint[:, :, :-1, :].gather(
            3, tgt_pad[:, None, :, None].expand(-1, t_max, -1, 1)).squeeze(3)
    else:
        emit = joint.new_zeros((batch, t_max, 0))
    blanks = joint[..., blank]

    floor = torch.tensor(LOG_ZERO, dtype=joint.dtype)
    alpha = torch.full((batch, t_max, u_max), LOG_ZERO, dtype=joint.dtype)
    alpha[:, 0, 0] = 0.0
    rows = torch.arange(batch)
    for d in range(1, t_max + u_max - 1):
        t_lo = max(0, d - (u_max - 1))
        t_hi = min(d, t_max - 1)
        ts = torch.arange(t_lo, t_hi + 1)
        us = d - ts
        from_time = torch.where(
            ts[None, :] > 0,
            alpha[:, (ts - 1).clamp(min=0), us]
            + blanks[:, (ts - 1).clamp(min=0), us],
            floor)
        if u_max > 1:
            from_label = torch.where(
                us[None, :] > 0,
                alpha[:, ts, (us - 1).clamp(min=0)]
                + emit[:, ts, (us - 1).clamp(min=0, max=u_max - 2)],
                floor)
        else:
            from_label = torch.full_like(from_time, LOG_ZERO)
        alpha = alpha.index_put(
            (rows[:, None], ts[None, :], us[None, :]),
            torch.logaddexp(from_time, from_label))
    t_idx = torch.tensor(t_lens) - 1
    u_idx = torch.tensor(u_lens) - 1
    return -(alpha[rows, t_idx, u_idx] + blanks[rows, t_idx, u_idx])


# ---------------------------------------------------------------------------
# weighted total


@dataclass(frozen=True)
class LossWeights:
    w_mel: float = 45.0
    w_at: float = 1.0
    w_ctc_wave: float = 1.0
    w_ctc_content: float = 1.0
    w_adv_disentangle: float = 1.0
    w_gan: float = 1.0

    def __post_init__(self):
        if self.w_mel <= 0:
            raise DataError("w_mel must be positive")
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise DataError(f"{f.name} must be non-negative")

    def as_dict(self) -> dict[str, float]:
        return {f.name[2:]: float(getattr(self, f.name)) for f in fields(self)}


TERM_ORDER = ("mel", "at", "ctc_wave", "ctc_content", "adv_disentangle", "gan")


@dataclass
class LossReport:
    step: int
    terms: dict[str, float]
    weights: dict[str, float]
    total: float
    wall_clock: float = 0.0

    def recompute_total(self) -> float:
        return math.fsum(self.weights[name] * self.terms[name]
                         for name in TERM_ORDER if name in self.terms)

    def to_json_line(self) -> str:
        record = {"step": self.step, "terms": self.terms, "total": self.total,
                  "wall_clock": self.wall_clock}
        return json.dumps(record, sort_keys=True)


def total_generator_loss(terms: dict, weights: LossWeights,
                         step: int = 0) -> LossReport:
    """Weighted sum of the generator-side terms, retained per term."""
    values = {}
    for name, value in terms.items():
        if name not in TERM_ORDER:
            raise DataError(f"unknown loss term {name!r}")
        scalar = float(value)
        if not math.isfinite(scalar):
            raise NumericError(f"loss term {name!r} is non-finite: {scalar}")
        values[name] = scalar
    wdict = weights.as_dict()
    total = math.fsum(wdict[name] * values[name]
                      for name in TERM_ORDER if name in values)
    return LossReport(step=step, terms=values, weights=wdict, total=total)


def weighted_total(terms: dict[str, torch.Tensor],
                   weights: LossWeights) -> torch.Tensor:
    """Differentiable counterpart of `total_generator_loss`."""
    wdict = weights.as_dict()
    total = None
    for name in TERM_ORDER:
        if name in terms:
            piece = wdict[name] * terms[name]
            total = piece if total is None else total + piece
    if total is None:
        raise DataError("no loss terms supplied")
    return total
