"""Noise-prediction backends: analytic Gaussian oracle, trainable toy
convnet, and a remote HTTP client speaking the denoise wire protocol.

Every backend exposes ``predict(z_t, t, cond) -> eps_hat`` with eps_hat the
same (C, h, w) shape as the input latent.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from textailor import protocol
from textailor.schedule import NoiseSchedule

__all__ = [
    "Conditioning",
    "AnalyticGaussianDenoiser",
    "ToyArch",
    "ToyDenoiser",
    "RemoteDenoiser",
    "analytic_predict",
    "toy_forward",
    "toy_backward",
    "remote_predict",
    "prompt_to_token",
]


@dataclass(frozen=True)
class Conditioning:
    """Opaque prompt token plus an (h, w) depth map in [0, 1], background 0."""

    prompt_token: int
    depth: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"depth must be (h, w), got {d.shape}")
        if d.size and (d.min() < -1e-9 or d.max() > 1 + 1e-9):
            raise ValueError("depth values must lie in [0, 1]")
        object.__setattr__(self, "depth", d)


def prompt_to_token(prompt: str, vocab: int = 16) -> int:
    """Stable prompt hash into the toy vocabulary (md5, not salted hash())."""
    digest = hashlib.md5(prompt.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") % vocab


# ---------------------------------------------------------------------------
# analytic Gaussian oracle
# ---------------------------------------------------------------------------

def analytic_predict(
    z_t: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    mu: np.ndarray,
    sigma0: float,
) -> np.ndarray:
    """Exact posterior-mean noise for Gaussian data N(mu, sigma0^2 I):

        E[eps | z_t] = sqrt(1-ab_t) * (z_t - sqrt(ab_t)*mu) / (ab_t*sigma0^2 + 1 - ab_t)
    """
    if t < 1:
        raise ValueError("analytic_predict requires t >= 1")
    ab = sched.alpha_bar[t]
    z_t = np.asarray(z_t, dtype=np.float64)
    return np.sqrt(1.0 - ab) * (z_t - np.sqrt(ab) * mu) / (ab * sigma0**2 + 1.0 - ab)


@dataclass
class AnalyticGaussianDenoiser:
    """Closed-form optimal denoiser for Gaussian data; the sampler oracle."""

    schedule: NoiseSchedule
    mu: np.ndarray
    sigma0: float

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        self.mu = np.asarray(self.mu, dtype=np.float64)

    def predict(self, z_t: np.ndarray, t: int, cond=None) -> np.ndarray:
        return analytic_predict(z_t, t, self.schedule, self.mu, self.sigma0)


# ---------------------------------------------------------------------------
# toy convolutional denoiser
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToyArch:
    """Shape descriptor for the toy network.

    Input channels are the RGB latent plus depth plus a broadcast t/T channel.
    The prompt token indexes a per-token bias added to the second hidden
    layer.  Two 3x3 tanh conv layers feed a linear 3x3 output conv.
    """

    latent_channels: int = 3
    hidden: int = 32
    kernel: int = 3
    vocab: int = 16
    T: int = 1000

    @property
    def in_channels(self) -> int:
        return self.latent_channels + 2  # latent + depth + timestep channel

    def _sizes(self):
        k2 = self.kernel * self.kernel
        return [
            ("w1", (self.hidden, self.in_channels * k2)),
            ("b1", (self.hidden,)),
            ("w2", (self.hidden, self.hidden * k2)),
            ("b2", (self.hidden,)),
            ("w3", (self.latent_channels, self.hidden * k2)),
            ("b3", (self.latent_channels,)),
            ("token", (self.vocab, self.hidden)),
        ]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self._sizes())

    def slices(self) -> dict[str, tuple[slice, tuple]]:
        out, offset = {}, 0
        for name, shape in self._sizes():
            n = int(np.prod(shape))
            out[name] = (slice(offset, offset + n), shape)
            offset += n
        return out

    def init_params(self, seed: int) -> np.ndarray:
        """He-style random init, small final layer; deterministic in the seed."""
        rng = np.random.default_rng(seed)
        parts = []
        for name, shape in self._sizes():
            fan_in = shape[-1] if len(shape) > 1 else 1
            scale = 1.0 / np.sqrt(fan_in)
            if name == "w3":
                scale *= 0.1
            if name.startswith("b"):
                parts.append(np.zeros(shape))
            else:
                parts.append(scale * rng.standard_normal(shape))
        return np.concatenate([p.ravel() for p in parts])


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(C, h, w) -> (C*k*k, h*w) patch matrix with zero padding (same size)."""
    c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    cols = np.empty((c, k * k, h, w), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i * k + j] = xp[:, i:i + h, j:j + w]
    return cols.reshape(c * k * k, h * w)


def _col2im(cols: np.ndarray, c: int, h: int, w: int, k: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter patch-gradient columns back."""
    p = k // 2
    grad = np.zeros((c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    cols = cols.reshape(c, k * k, h, w)
    for i in range(k):
        for j in range(k):
            grad[:, i:i + h, j:j + w] += cols[:, i * k + j]
    return grad[:, p:p + h, p:p + w]


def _unpack(params: np.ndarray, arch: ToyArch) -> dict[str, np.ndarray]:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (arch.n_params,):
        raise ValueError(f"expected {arch.n_params} parameters, got {params.shape}")
    return {name: params[sl].reshape(shape) for name, (sl, shape) in arch.slices().items()}


def _stack_input(z_t: np.ndarray, t: int, cond: Conditioning, arch: ToyArch) -> np.ndarray:
    z_t = np.asarray(z_t, dtype=np.float64)
    if z_t.ndim != 3 or z_t.shape[0] != arch.latent_channels:
        raise ValueError(f"latent must be ({arch.latent_channels}, h, w), got {z_t.shape}")
    h, w = z_t.shape[1:]
    if cond.depth.shape != (h, w):
        raise ValueError(f"depth shape {cond.depth.shape} does not match latent {(h, w)}")
    t_chan = np.full((1, h, w), t / arch.T)
    return np.concatenate([z_t, cond.depth[None], t_chan], axis=0)


def toy_forward(params: np.ndarray, z_t: np.ndarray, t: int, cond: Conditioning,
                arch: ToyArch) -> np.ndarray:
    """Deterministic forward pass of the toy noise predictor."""
    p = _unpack(params, arch)
    x = _stack_input(z_t, t, cond, arch)
    h, w = x.shape[1:]
    k = arch.kernel

    c1 = p["w1"] @ _im2col(x, k) + p["b1"][:, None]
    a1 = np.tanh(c1).reshape(arch.hidden, h, w)
    tok = p["token"][cond.prompt_token % arch.vocab]
    c2 = p["w2"] @ _im2col(a1, k) + (p["b2"] + tok)[:, None]
    a2 = np.tanh(c2).reshape(arch.hidden, h, w)
    out = p["w3"] @ _im2col(a2, k) + p["b3"][:, None]
    return out.reshape(arch.latent_channels, h, w)


def toy_backward(params: np.ndarray, z_t: np.ndarray, t: int, cond: Conditioning,
                 upstream_grad: np.ndarray, arch: ToyArch) -> np.ndarray:
    """Exact reverse-mode gradient of toy_forward w.r.t. the parameter vector.

    ``upstream_grad`` is dL/d(output) with the output's (C, h, w) shape.
    """
    p = _unpack(params, arch)
    x = _stack_input(z_t, t, cond, arch)
    h, w = x.shape[1:]
    k = arch.kernel
    tok_idx = cond.prompt_token % arch.vocab

    cols_x = _im2col(x, k)
    c1 = p["w1"] @ cols_x + p["b1"][:, None]
    a1 = np.tanh(c1)
    cols_a1 = _im2col(a1.reshape(arch.hidden, h, w), k)
    c2 = p["w2"] @ cols_a1 + (p["b2"] + p["token"][tok_idx])[:, None]
    a2 = np.tanh(c2)
    cols_a2 = _im2col(a2.reshape(arch.hidden, h, w), k)

    g_out = np.asarray(upstream_grad, dtype=np.float64).reshape(arch.latent_channels, h * w)

    g_w3 = g_out @ cols_a2.T
    g_b3 = g_out.sum(axis=1)
    g_a2 = _col2im(p["w3"].T @ g_out, arch.hidden, h, w, k).reshape(arch.hidden, h * w)
    g_c2 = g_a2 * (1.0 - a2**2)

    g_w2 = g_c2 @ cols_a1.T
    g_b2 = g_c2.sum(axis=1)
    g_token = np.zeros_like(p["token"])
    g_token[tok_idx] = g_b2
    g_a1 = _col2im(p["w2"].T @ g_c2, arch.hidden, h, w, k).reshape(arch.hidden, h * w)
    g_c1 = g_a1 * (1.0 - a1**2)

    g_w1 = g_c1 @ cols_x.T
    g_b1 = g_c1.sum(axis=1)

    grads = {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2,
             "w3": g_w3, "b3": g_b3, "token": g_token}
    flat = np.empty(arch.n_params)
    for name, (sl, shape) in arch.slices().items():
        flat[sl] = grads[name].ravel()
    return flat


class ToyDenoiser:
    """Trainable toy backend bundling an architecture and a parameter vector."""

    def __init__(self, arch: ToyArch = ToyArch(), params: np.ndarray | None = None,
                 seed: int = 0):
        self.arch = arch
        self.params = (np.asarray(params, dtype=np.float64).copy()
                       if params is not None else arch.init_params(seed))
        if self.params.shape != (arch.n_params,):
            raise ValueError("parameter vector does not match the architecture")

    def predict(self, z_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        return toy_forward(self.params, z_t, t, cond, self.arch)

    def grad(self, z_t: np.ndarray, t: int, cond: Conditioning,
             upstream_grad: np.ndarray) -> np.ndarray:
        return toy_backward(self.params, z_t, t, cond, upstream_grad, self.arch)

    def save(self, path) -> None:
        np.savez(path, params=self.params,
                 arch=np.array([self.arch.latent_channels, self.arch.hidden,
                                self.arch.kernel, self.arch.vocab, self.arch.T]))

    @classmethod
    def load(cls, path) -> "ToyDenoiser":
        data = np.load(path)
        lc, hidden, kernel, vocab, T = (int(v) for v in data["arch"])
        arch = ToyArch(latent_channels=lc, hidden=hidden, kernel=kernel, vocab=vocab, T=T)
        return cls(arch=arch, params=data["params"])


@dataclass
class ClampedDenoiser:
    """Wrap a backend so its implied clean latent stays inside data bounds.

    Weak predictors blow up deterministic DDIM at early timesteps (the
    implied z0 divides by sqrt(alpha_bar)); clamping the implied z0 and
    re-deriving eps is the standard stabilization and keeps the sampler
    formulas untouched.
    """

    inner: object
    schedule: NoiseSchedule
    lo: float = -0.1
    hi: float = 1.1

    def predict(self, z_t: np.ndarray, t: int, cond) -> np.ndarray:
        eps = self.inner.predict(z_t, t, cond)
        ab = self.schedule.alpha_bar[t]
        sqrt_ab, sqrt_1ab = np.sqrt(ab), np.sqrt(1.0 - ab)
        z0 = np.clip((z_t - sqrt_1ab * eps) / sqrt_ab, self.lo, self.hi)
        return (z_t - sqrt_ab * z0) / sqrt_1ab


# ---------------------------------------------------------------------------
# remote backend
# ---------------------------------------------------------------------------

class RemoteDenoiserError(RuntimeError):
    """Base class for remote backend failures."""


class RemoteConnectionError(RemoteDenoiserError):
    """Endpoint unreachable after retries."""


class RemoteProtocolError(RemoteDenoiserError):
    """Response violated the denoise wire protocol."""


class RemoteShapeError(RemoteDenoiserError):
    """Response tensor shape did not match the request."""


def remote_predict(endpoint: str, z_t: np.ndarray, t: int, cond: Conditioning,
                   prompt: str | int | None = None, guidance: float | None = None,
                   retries: int = 3, backoff: float = 0.25, timeout: float = 30.0,
                   session=None) -> np.ndarray:
    """POST one denoise request, retrying connection failures with backoff."""
    import requests

    z_t = np.asarray(z_t, dtype=np.float64)
    body = protocol.build_denoise_request(
        z_t, t,
        prompt=prompt if prompt is not None else int(cond.prompt_token),
        depth=cond.depth, guidance=guidance,
    )
    post = (session or requests).post
    url = endpoint.rstrip("/") + "/v1/denoise"
    last_exc = None
    for attempt in range(retries + 1):
        try:
            resp = post(url, json=body, timeout=timeout)
            break
        except requests.exceptions.RequestException as exc:
            last_exc = exc
            if attempt < retries:
                time.sleep(backoff * (2**attempt))
    else:
        raise RemoteConnectionError(f"cannot reach {url} after {retries + 1} attempts: {last_exc}")

    if resp.status_code != 200:
        raise RemoteProtocolError(f"denoise endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        payload = resp.json()
        eps = protocol.parse_denoise_response(payload)
    except (ValueError, KeyError, TypeError) as exc:
        raise RemoteProtocolError(f"malformed denoise response: {exc}") from exc
    if eps.shape != z_t.shape:
        raise RemoteShapeError(f"response shape {eps.shape} does not match request {z_t.shape}")
    return eps.astype(np.float64)


@dataclass
class RemoteDenoiser:
    """HTTP client backend; one request in flight per instance."""

    endpoint: str
    prompt: str | int | None = None
    guidance: float | None = None
    retries: int = 3
    backoff: float = 0.25
    timeout: float = 30.0
    session: object = None

    def predict(self, z_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        return remote_predict(self.endpoint, z_t, t, cond, prompt=self.prompt,
                              guidance=self.guidance, retries=self.retries,
                              backoff=self.backoff, timeout=self.timeout,
                              session=self.session)

    def health(self) -> dict:
        import requests

        url = self.endpoint.rstrip("/") + "/v1/health"
        try:
            resp = (self.session or requests).post(url, json={}, timeout=self.timeout)
        except requests.exceptions.RequestException as exc:
            raise RemoteConnectionError(f"cannot reach {url}: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteProtocolError(f"health endpoint returned HTTP {resp.status_code}")
        payload = resp.json()
        if payload.get("schema") != protocol.SCHEMA:
            raise RemoteProtocolError(f"protocol version mismatch: {payload.get('schema')!r}")
        return payload
