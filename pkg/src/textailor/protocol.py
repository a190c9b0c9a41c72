"""Denoise wire protocol: JSON bodies carrying base64 float32 tensors.

Tensors travel as row-major little-endian float32 bytes, base64 encoded,
with an explicit shape list.  Request schema string: ``textailor-denoise/1``.
"""

from __future__ import annotations

import base64

import numpy as np

SCHEMA = "textailor-denoise/1"

__all__ = [
    "SCHEMA",
    "encode_f32",
    "decode_f32",
    "build_denoise_request",
    "parse_denoise_request",
    "build_denoise_response",
    "parse_denoise_response",
]


def encode_f32(arr: np.ndarray) -> str:
    """Array -> base64 of row-major little-endian float32 bytes."""
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def decode_f32(data: str, shape) -> np.ndarray:
    """Inverse of :func:`encode_f32`; validates the byte count against shape."""
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    shape = tuple(int(s) for s in shape)
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(f"payload holds {len(raw)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def build_denoise_request(z: np.ndarray, t: int, prompt, depth: np.ndarray,
                          guidance: float | None = None) -> dict:
    z = np.asarray(z)
    if z.ndim != 3:
        raise ValueError(f"z must be (C, h, w), got {z.shape}")
    depth = np.asarray(depth)
    if depth.shape != z.shape[1:]:
        raise ValueError(f"depth shape {depth.shape} does not match latent {z.shape[1:]}")
    body = {
        "schema": SCHEMA,
        "z": encode_f32(z),
        "shape": [int(s) for s in z.shape],
        "t": int(t),
        "prompt": prompt,
        "depth": encode_f32(depth),
    }
    if guidance is not None:
        body["guidance"] = float(guidance)
    return body


def parse_denoise_request(body: dict) -> tuple[np.ndarray, int, object, np.ndarray, float | None]:
    """Validate and decode a denoise request; raises ValueError on violations."""
    if not isinstance(body, dict):
        raise ValueError("request body must be a JSON object")
    if body.get("schema") != SCHEMA:
        raise ValueError(f"schema mismatch: expected {SCHEMA!r}, got {body.get('schema')!r}")
    shape = body.get("shape")
    if (not isinstance(shape, (list, tuple)) or len(shape) != 3
            or not all(isinstance(s, int) and s > 0 for s in shape)):
        raise ValueError("shape must be a list of three positive integers")
    z = decode_f32(body["z"], shape)
    depth = decode_f32(body["depth"], shape[1:])
    t = body.get("t")
    if not isinstance(t, int) or t < 1:
        raise ValueError("t must be a positive integer")
    guidance = body.get("guidance")
    if guidance is not None:
        guidance = float(guidance)
    return z, t, body.get("prompt"), depth, guidance


def build_denoise_response(eps: np.ndarray) -> dict:
    eps = np.asarray(eps)
    return {"eps": encode_f32(eps), "shape": [int(s) for s in eps.shape]}


def parse_denoise_response(body: dict) -> np.ndarray:
    if not isinstance(body, dict) or "eps" not in body or "shape" not in body:
        raise ValueError("response must carry 'eps' and 'shape'")
    return decode_f32(body["eps"], body["shape"])
