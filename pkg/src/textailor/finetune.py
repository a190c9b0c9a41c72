"""Fine-tuning of the toy denoiser on resampled anchor views.

The objective is the denoising loss on the resampled latents plus a
performance preservation term that ties the trainable network's output to a
frozen snapshot of itself, weighted by lambda.  Training is plain SGD with
momentum so every gradient is exactly testable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from textailor.denoisers import Conditioning, ToyDenoiser, toy_backward, toy_forward
from textailor.geometry.camera import Viewpoint
from textailor.schedule import NoiseSchedule, forward_noise

__all__ = [
    "ANCHOR_VIEWPOINTS",
    "AnchorSample",
    "FinetuneConfig",
    "TrainLog",
    "loss_fine",
    "loss_preserve",
    "loss_final",
    "loss_final_grad",
    "finetune_loop",
    "write_training_log",
]

# The five fine-tuning viewpoints near the first view (azimuth, elevation, radius).
ANCHOR_VIEWPOINTS = (
    Viewpoint(0.0, 15.0, 1.0),
    Viewpoint(0.0, 35.0, 1.0),
    Viewpoint(0.0, -5.0, 1.0),
    Viewpoint(20.0, 15.0, 1.0),
    Viewpoint(340.0, 15.0, 1.0),
)


@dataclass(frozen=True)
class AnchorSample:
    """One resampled training pair: clean latent plus its conditioning."""

    z0: np.ndarray
    cond: Conditioning
    viewpoint: Viewpoint | None = None


@dataclass
class FinetuneConfig:
    """Preservation weight, optimizer settings, and the training batch."""

    batch: list
    lam: float = 2.5
    steps: int = 2000
    lr: float = 1e-3
    momentum: float = 0.9
    weight_fn: object = None  # w(t); None means constant 1
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not self.batch:
            raise ValueError("training batch must be non-empty")

    def w(self, t: int) -> float:
        return 1.0 if self.weight_fn is None else float(self.weight_fn(t))


def _wt(weight_fn, t: int) -> float:
    return 1.0 if weight_fn is None else float(weight_fn(t))


def loss_fine(params: np.ndarray, sample: AnchorSample, t: int, eps: np.ndarray,
              sched: NoiseSchedule, arch, weight_fn=None) -> float:
    """w(t) * || eps_hat(z_t, t, cond) - eps ||^2 on one noised sample."""
    z_t = forward_noise(sample.z0, t, eps, sched)
    eps_hat = toy_forward(params, z_t, t, sample.cond, arch)
    diff = eps_hat - eps
    return _wt(weight_fn, t) * float((diff * diff).sum())


def loss_preserve(params: np.ndarray, frozen_params: np.ndarray, sample: AnchorSample,
                  t: int, eps: np.ndarray, sched: NoiseSchedule, arch,
                  weight_fn=None) -> float:
    """w(t) * || eps_hat(params) - eps_hat(frozen) ||^2 on the same draw."""
    z_t = forward_noise(sample.z0, t, eps, sched)
    out = toy_forward(params, z_t, t, sample.cond, arch)
    ref = toy_forward(frozen_params, z_t, t, sample.cond, arch)
    diff = out - ref
    return _wt(weight_fn, t) * float((diff * diff).sum())


def loss_final(params: np.ndarray, frozen_params: np.ndarray, sample: AnchorSample,
               t: int, eps: np.ndarray, sched: NoiseSchedule, arch,
               lam: float, weight_fn=None) -> float:
    """loss_fine + lambda * loss_preserve; reduces to loss_fine at lambda=0."""
    fine = loss_fine(params, sample, t, eps, sched, arch, weight_fn)
    if lam == 0.0:
        return fine
    return fine + lam * loss_preserve(params, frozen_params, sample, t, eps,
                                      sched, arch, weight_fn)


def loss_final_grad(params: np.ndarray, frozen_params: np.ndarray, sample: AnchorSample,
                    t: int, eps: np.ndarray, sched: NoiseSchedule, arch,
                    lam: float, weight_fn=None):
    """Analytic parameter gradient of loss_final plus its component values.

    The frozen branch is a constant, so both terms backpropagate through the
    same trainable forward pass with upstream 2*w(t)*(residual).
    """
    wt = _wt(weight_fn, t)
    z_t = forward_noise(sample.z0, t, eps, sched)
    out = toy_forward(params, z_t, t, sample.cond, arch)

    diff_fine = out - eps
    fine = wt * float((diff_fine * diff_fine).sum())
    upstream = 2.0 * wt * diff_fine

    pre = 0.0
    if lam > 0.0:
        ref = toy_forward(frozen_params, z_t, t, sample.cond, arch)
        diff_pre = out - ref
        pre = wt * float((diff_pre * diff_pre).sum())
        upstream = upstream + lam * 2.0 * wt * diff_pre

    grad = toy_backward(params, z_t, t, sample.cond, upstream, arch)
    return grad, fine, pre, fine + lam * pre


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)

    def record(self, step: int, fine: float, pre: float, total: float):
        self.steps.append({"step": step, "loss_fine": fine,
                           "loss_pre": pre, "loss_final": total})

    def summary(self) -> dict:
        if not self.steps:
            return {"steps": 0}
        first, last = self.steps[0], self.steps[-1]
        return {
            "steps": len(self.steps),
            "initial_loss_final": first["loss_final"],
            "final_loss_final": last["loss_final"],
            "final_loss_fine": last["loss_fine"],
            "final_loss_pre": last["loss_pre"],
        }


def finetune_loop(toy: ToyDenoiser, anchors: list, cfg: FinetuneConfig,
                  sched: NoiseSchedule) -> tuple[np.ndarray, TrainLog]:
    """SGD with momentum on loss_final over the anchor batch.

    Each step draws a uniform sample from the batch, a uniform t in 1..T and
    fresh unit noise.  A frozen snapshot of the entry parameters provides the
    preservation target.  Returns the updated parameter vector and the log;
    ``toy`` is updated in place.
    """
    log = TrainLog()
    if cfg.steps == 0:
        return toy.params, log

    frozen = toy.params.copy()
    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros_like(toy.params)

    for step in range(cfg.steps):
        sample = anchors[rng.integers(len(anchors))]
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(sample.z0.shape)
        grad, fine, pre, total = loss_final_grad(
            toy.params, frozen, sample, t, eps, sched, toy.arch,
            cfg.lam, cfg.weight_fn)
        if not np.isfinite(total):
            raise FloatingPointError(
                f"non-finite loss at step {step}: fine={fine}, pre={pre}")
        velocity = cfg.momentum * velocity - cfg.lr * grad
        toy.params = toy.params + velocity
        log.record(step, fine, pre, total)

    return toy.params, log


def write_training_log(log: TrainLog, csv_path, json_path=None) -> None:
    """Emit the per-step CSV and an optional JSON summary."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "L_Fine", "L_pre", "L_Final"])
        for row in log.steps:
            writer.writerow([row["step"], row["loss_fine"], row["loss_pre"], row["loss_final"]])
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(log.summary(), fh, indent=2, sort_keys=True)
