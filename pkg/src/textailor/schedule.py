"""Noise schedules and the deterministic resampling DDIM sampler.

Conventions used throughout:

* ``alpha_bar`` is indexed ``0..T`` with ``alpha_bar[0] == 1`` and strictly
  decreasing entries in ``(0, 1]``.
* A latent is a ``(C, h, w)`` float array.  All sampler math is elementwise,
  so the functions below only check shapes, never meaning.
* The sampler is deterministic DDIM (generative variance 0).  All randomness
  enters through explicitly passed noise or an integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoiseSchedule",
    "ResampleConfig",
    "make_schedule",
    "uniform_tau",
    "forward_noise",
    "predict_z0",
    "ddim_step",
    "inpaint_merge",
    "resample_loop",
]

BETA_MIN = 1e-4
BETA_MAX = 2e-2


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative noise schedule plus the sampling sub-sequence ``tau``.

    ``tau`` is a strictly increasing subset of ``1..T``; the sampler walks it
    from the back.  ``alpha_bar`` has ``T + 1`` entries including the t=0
    anchor of exactly 1.
    """

    T: int
    alpha_bar: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.T + 1,):
            raise ValueError(f"alpha_bar must have {self.T + 1} entries, got {ab.shape}")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1")
        if not np.all(np.diff(ab) < 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.any(ab <= 0) or np.any(ab > 1):
            raise ValueError("alpha_bar entries must lie in (0, 1]")
        tau = np.asarray(self.tau, dtype=np.int64)
        if tau.ndim != 1 or tau.size < 1:
            raise ValueError("tau must be a non-empty 1-d index array")
        if tau[0] < 1 or tau[-1] > self.T or not np.all(np.diff(tau) > 0):
            raise ValueError("tau must be strictly increasing within 1..T")
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "tau", tau)

    def with_steps(self, steps: int) -> "NoiseSchedule":
        """Return a copy whose tau is a uniform sub-sequence of the given length."""
        return NoiseSchedule(self.T, self.alpha_bar, uniform_tau(self.T, steps))


@dataclass(frozen=True)
class ResampleConfig:
    """Resampling repetitions R per timestep and DDIM step count S."""

    repetitions: int = 3
    steps: int = 30

    def __post_init__(self):
        if self.repetitions < 0:
            raise ValueError("repetitions must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def uniform_tau(T: int, steps: int) -> np.ndarray:
    """Uniformly spaced sampling timesteps, always ending at T."""
    if not 1 <= steps <= T:
        raise ValueError(f"steps must be in 1..{T}")
    tau = np.unique(np.round(np.linspace(1, T, steps)).astype(np.int64))
    return tau


def make_schedule(T: int, kind: str = "linear", steps: int | None = None) -> NoiseSchedule:
    """Build a noise schedule.

    ``linear`` spaces per-step betas in [1e-4, 2e-2] and accumulates their
    product; ``cosine`` uses the squared-cosine alpha_bar profile.  ``steps``
    selects a uniform tau sub-sequence (defaults to every timestep).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if kind == "linear":
        betas = np.linspace(BETA_MIN, BETA_MAX, T)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    elif kind == "cosine":
        s = 0.008
        t = np.arange(T + 1, dtype=np.float64)
        f = np.cos((t / T + s) / (1.0 + s) * np.pi / 2.0) ** 2
        alpha_bar = f / f[0]
        # guard the tail against hitting 0 for very large T
        alpha_bar = np.clip(alpha_bar, 1e-12, None)
        alpha_bar[0] = 1.0
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    tau = uniform_tau(T, steps if steps is not None else T)
    return NoiseSchedule(T=T, alpha_bar=alpha_bar, tau=tau)


def _check_latent(z: np.ndarray, name: str = "latent") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3:
        raise ValueError(f"{name} must be a (C, h, w) array, got shape {z.shape}")
    return z


def forward_noise(z0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noise a clean latent to timestep t:  sqrt(ab_t)*z0 + sqrt(1-ab_t)*eps."""
    z0 = _check_latent(z0, "z0")
    eps = _check_latent(eps, "eps")
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: z0 {z0.shape} vs eps {eps.shape}")
    ab_t = sched.alpha_bar[t]
    return np.sqrt(ab_t) * z0 + np.sqrt(1.0 - ab_t) * eps


def predict_z0(z_t: np.ndarray, eps_hat: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Invert forward noising given a noise estimate:  (z_t - sqrt(1-ab_t)*eps_hat) / sqrt(ab_t)."""
    if t < 1:
        raise ValueError("predict_z0 requires t >= 1")
    z_t = _check_latent(z_t, "z_t")
    eps_hat = _check_latent(eps_hat, "eps_hat")
    ab_t = sched.alpha_bar[t]
    return (z_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)


def ddim_step(
    z_t: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    t_prev: int,
    sched: NoiseSchedule,
) -> np.ndarray:
    """One deterministic DDIM update from timestep t down to t_prev.

    z_prev = sqrt(ab_prev) * z0_hat + sqrt(1 - ab_prev) * eps_hat, with z0_hat
    from :func:`predict_z0`.  Deterministic: the generative variance is 0.
    """
    if not t > t_prev >= 0:
        raise ValueError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    z0_hat = predict_z0(z_t, eps_hat, t, sched)
    ab_prev = sched.alpha_bar[t_prev]
    return np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * np.asarray(eps_hat, dtype=np.float64)


def inpaint_merge(z_unknown: np.ndarray, z_known: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Composite the two branches:  known * (1 - mask) + unknown * mask.

    ``mask`` is an (h, w) binary map broadcast over channels; 1 marks cells to
    take from the unknown (generated) branch.  Where mask is 0 the result is
    the known branch bit for bit.
    """
    z_unknown = _check_latent(z_unknown, "z_unknown")
    z_known = _check_latent(z_known, "z_known")
    if z_unknown.shape != z_known.shape:
        raise ValueError(f"shape mismatch: {z_unknown.shape} vs {z_known.shape}")
    mask = np.asarray(mask)
    if mask.shape != z_unknown.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match latent {z_unknown.shape[1:]}")
    keep = mask.astype(bool)[None, :, :]
    return np.where(keep, z_unknown, z_known)


def resample_loop(
    denoiser,
    z0_known: np.ndarray,
    mask: np.ndarray,
    cond,
    sched: NoiseSchedule,
    cfg: ResampleConfig,
    rng_seed: int,
) -> np.ndarray:
    """Resampling DDIM inpainting over the schedule's tau sub-sequence.

    At each timestep the unknown branch takes one DDIM step and is merged with
    a freshly noised known branch; the merge is then re-noised one step up and
    re-denoised ``cfg.repetitions`` times to harmonize the two regions.  With
    repetitions == 0 this reduces to plain DDIM inpainting.

    Noise draw order (part of the seeded contract, mirrored by remote
    backends): initial z_T first, then per timestep the known-branch noise,
    then per repetition the renoise draw followed by that repetition's
    known-branch noise.  Every draw has the latent's full shape.

    The returned latent equals ``z0_known`` exactly on mask == 0 cells.
    """
    z0_known = _check_latent(z0_known, "z0_known")
    mask = np.asarray(mask)
    if mask.shape != z0_known.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match latent {z0_known.shape[1:]}")
    if not np.any(mask):
        return z0_known.copy()

    tau = sched.tau if sched.tau.size == cfg.steps else uniform_tau(sched.T, cfg.steps)
    ts = list(tau[::-1])
    rng = np.random.default_rng(rng_seed)
    shape = z0_known.shape

    z = rng.standard_normal(shape)
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else 0
        ab_t = sched.alpha_bar[t]
        ab_prev = sched.alpha_bar[t_prev]

        z_known_prev = forward_noise(z0_known, t_prev, rng.standard_normal(shape), sched)
        eps_hat = denoiser.predict(z, t, cond)
        z_unknown_prev = ddim_step(z, eps_hat, t, t_prev, sched)
        merged = inpaint_merge(z_unknown_prev, z_known_prev, mask)

        for _ in range(cfg.repetitions):
            renoise = rng.standard_normal(shape)
            ratio = ab_t / ab_prev
            z_up = np.sqrt(ratio) * merged + np.sqrt(1.0 - ratio) * renoise
            eps_hat = denoiser.predict(z_up, t, cond)
            z_unknown_prev = ddim_step(z_up, eps_hat, t, t_prev, sched)
            z_known_prev = forward_noise(z0_known, t_prev, rng.standard_normal(shape), sched)
            merged = inpaint_merge(z_unknown_prev, z_known_prev, mask)

        z = merged

    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite latent produced by resample loop")
    return z
