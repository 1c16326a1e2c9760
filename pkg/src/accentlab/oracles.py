"""Independent brute-force oracles and numeric self checks.

Everything here deliberately avoids the DP implementations in `losses`:
CTC and transducer likelihoods are recomputed by explicit path
enumeration, and gradients are recomputed by central finite differences.
The `selfcheck` CLI subcommand and the test suite both run these.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch


def collapse_path(path: Sequence[int], blank: int) -> tuple[int, ...]:
    """CTC collapse written directly from the definition."""
    out: list[int] = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return tuple(out)


def ctc_enumerate(log_probs: np.ndarray, blank: int) -> dict[tuple[int, ...], float]:
    """Total probability of every collapsed target, by full path enumeration."""
    t_len, width = log_probs.shape
    totals: dict[tuple[int, ...], float] = {}
    for path in itertools.product(range(width), repeat=t_len):
        logp = sum(log_probs[t, s] for t, s in enumerate(path))
        key = collapse_path(path, blank)
        totals[key] = math.exp(logp) + totals.get(key, 0.0)
    return totals


def ctc_brute_force(log_probs: np.ndarray, target: Sequence[int],
                    blank: int) -> float:
    """-log P(target) by enumeration; +inf when no path collapses to it."""
    prob = ctc_enumerate(log_probs, blank).get(tuple(int(v) for v in target), 0.0)
    return -math.log(prob) if prob > 0 else float("inf")


def transducer_brute_force(joint_log_probs: np.ndarray, target: Sequence[int],
                           blank: int) -> float:
    """-log P(target) by recursive enumeration of lattice paths."""
    joint = np.asarray(joint_log_probs)
    t_len, u_len, _ = joint.shape
    tgt = [int(v) for v in target]

    def walk(t: int, u: int) -> float:
        # Probability mass of completing the path from node (t, u).
        if t == t_len - 1 and u == u_len - 1:
            here = math.exp(joint[t, u, blank])
        else:
            here = 0.0
        total = here
        if t + 1 < t_len:
            total += math.exp(joint[t, u, blank]) * walk(t + 1, u)
        if u + 1 < u_len:
            total += math.exp(joint[t, u, tgt[u]]) * walk(t, u + 1)
        return total

    prob = walk(0, 0)
    return -math.log(prob) if prob > 0 else float("inf")


def central_difference_check(fn: Callable[[torch.Tensor], torch.Tensor],
                             x: torch.Tensor, num_entries: int,
                             rng: np.random.Generator,
                             step: float = 1e-6) -> float:
    """Max relative error between autograd and central differences at x.

    `x` must be float64; entries to probe are chosen at random.
    """
    x = x.detach().clone().requires_grad_(True)
    value = fn(x)
    value.backward()
    analytic = x.grad.detach()
    flat = x.detach().reshape(-1)
    indices = rng.choice(flat.numel(), size=min(num_entries, flat.numel()),
                         replace=False)
    worst = 0.0
    for idx in indices:
        idx = int(idx)
        probe = flat.clone()
        probe[idx] += step
        plus = float(fn(probe.reshape(x.shape)))
        probe[idx] -= 2 * step
        minus = float(fn(probe.reshape(x.shape)))
        numeric = (plus - minus) / (2 * step)
        a = float(analytic.reshape(-1)[idx])
        denom = max(abs(a) + abs(numeric), 1e-8)
        worst = max(worst, abs(a - numeric) / denom)
    return worst


def module_gradient_check(module: torch.nn.Module,
                          forward: Callable[[], torch.Tensor],
                          num_entries: int, rng: np.random.Generator,
                          step: float = 1e-6) -> float:
    """Finite-difference check of d(sum of outputs)/d(parameter slice).

    The module must already be in float64. `forward` evaluates the scalar
    probe with the module's current parameters.
    """
    for p in module.parameters():
        if p.grad is not None:
            p.grad = None
    value = forward()
    value.backward()
    params = [p for p in module.parameters() if p.requires_grad and p.numel() > 0]
    worst = 0.0
    for _ in range(num_entries):
        p = params[int(rng.integers(0, len(params)))]
        idx = int(rng.integers(0, p.numel()))
        analytic = float(p.grad.reshape(-1)[idx]) if p.grad is not None else 0.0
        with torch.no_grad():
            original = float(p.reshape(-1)[idx])
            p.reshape(-1)[idx] = original + step
            plus = float(forward())
            p.reshape(-1)[idx] = original - step
            minus = float(forward())
            p.reshape(-1)[idx] = original
        numeric = (plus - minus) / (2 * step)
        denom = max(abs(analytic) + abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def random_log_probs(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Random log-normalized rows over the last axis."""
    raw = rng.normal(size=shape)
    return raw - np.log(np.sum(np.exp(raw), axis=-1, keepdims=True))


@dataclass
class SelfCheckResult:
    passed: int = 0
    failed: int = 0
    failures: list[str] = field(default_factory=list)

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append(f"{name}: {detail}")

    @property
    def ok(self) -> bool:
        return self.failed == 0


def run_selfcheck(seed: int = 0, verbose: bool = True,
                  log=print) -> SelfCheckResult:
    """Oracle suites: CTC/transducer enumeration equality plus gradient checks."""
    from . import nets  # deferred: selfcheck is also usable without model deps
    from .losses import (accent_ce_loss, ctc_loss, disentangle_loss,
                         gan_realism_losses, mel_l1, transducer_loss)

    rng = np.random.default_rng(seed)
    result = SelfCheckResult()

    # CTC DP vs enumeration, alphabet of 3 phones plus blank.
    blank = 3
    for t_len in range(1, 6):
        table_checks = 0
        lp = random_log_probs((t_len, 4), rng)
        table = ctc_enumerate(lp, blank)
        for length in range(0, 3):
            for tgt in itertools.product(range(3), repeat=length):
                from .losses import ctc_min_frames
                if ctc_min_frames(tgt) > t_len:
                    continue
                got = float(ctc_loss(torch.tensor(lp), tgt, blank))
                want = -math.log(table[tgt]) if table.get(tgt, 0.0) > 0 else float("inf")
                if not math.isclose(got, want, rel_tol=0, abs_tol=1e-6):
                    result.record(f"ctc T={t_len} target={tgt}", False,
                                  f"dp={got} enum={want}")
                else:
                    table_checks += 1
        result.record(f"ctc enumeration T={t_len} ({table_checks} targets)", True)

    # Transducer DP vs enumeration.
    for t_len in range(1, 4):
        for u_len in range(1, 4):
            joint = random_log_probs((t_len, u_len, 3), rng)
            tgt = [int(rng.integers(0, 2)) for _ in range(u_len - 1)]
            got = float(transducer_loss(torch.tensor(joint), tgt, blank=2))
            want = transducer_brute_force(joint, tgt, blank=2)
            ok = math.isclose(got, want, rel_tol=0, abs_tol=1e-6)
            result.record(f"transducer T={t_len} U={u_len}", ok,
                          "" if ok else f"dp={got} enum={want}")

    # Loss gradient checks at float64.
    def check_loss(name, fn, make_input):
        worst = 0.0
        for _ in range(5):
            x = torch.tensor(make_input(), dtype=torch.float64)
            worst = max(worst, central_difference_check(fn, x, 3, rng))
        result.record(f"grad {name}", worst < 1e-4, f"rel err {worst:.2e}")

    check_loss("accent_ce", lambda x: accent_ce_loss(x, 1),
               lambda: rng.normal(size=5))
    check_loss("disentangle", disentangle_loss, lambda: rng.normal(size=5))
    check_loss("mel_l1", lambda x: mel_l1(x[0], x[1]),
               lambda: rng.normal(size=(2, 4, 8)))
    check_loss("gan_d", lambda x: gan_realism_losses(x[0], x[1])[0],
               lambda: rng.normal(size=(2, 6)))
    check_loss("ctc", lambda x: ctc_loss(
        torch.log_softmax(x, dim=-1), [0, 1], 3),
        lambda: rng.normal(size=(5, 4)))
    check_loss("transducer", lambda x: transducer_loss(
        torch.log_softmax(x, dim=-1), [0, 1], 2),
        lambda: rng.normal(size=(3, 3, 3)))

    # Network gradient checks on tiny float64 instances.
    for name, worst in nets.gradient_check_all(seed=seed, instances=2, entries=2):
        result.record(f"grad net {name}", worst < 1e-4, f"rel err {worst:.2e}")

    if verbose:
        log(f"selfcheck: {result.passed} passed, {result.failed} failed")
        for failure in result.failures:
            log(f"  FAIL {failure}")
    return result
