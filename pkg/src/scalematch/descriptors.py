"""Object descriptors: cosine metric, image-statistics fallback, and the
client side of the activation-sidecar wire protocol.

The sidecar is a separate process reached over its stdin/stdout.  After a
one-line JSON handshake, each request is a JSON header line followed by raw
8-bit RGB bytes, and each response is a JSON header line followed by the
activation tensor as little-endian 32-bit floats.  One connection carries
one request at a time; the client serializes access with a lock.
"""

from __future__ import annotations

import enum
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import (
    LengthMismatch,
    ProtocolError,
    ShapeMismatch,
    SidecarUnavailable,
    ZeroVector,
)
from .imageops import as_float_image, resize_bilinear

FALLBACK = "fallback"
FALLBACK_SIDE = 32
SUPPORTED_RESOLUTIONS = (224, 128, 64, 32)


class LayerId(str, enum.Enum):
    """Network stages whose activations can serve as object descriptors."""

    pool1 = "pool1"
    res2c = "res2c"
    res3d = "res3d"
    res4f = "res4f"
    res5c = "res5c"
    pool5 = "pool5"


@dataclass
class ObjectDescriptor:
    """A flat descriptor vector tagged with its source layer/resolution.

    Descriptors are only comparable when both tags agree; ``fallback``
    marks vectors from :func:`describe_fallback`.
    """

    values: np.ndarray
    layer: str = FALLBACK
    resolution: int | str = FALLBACK

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("descriptor must be a non-empty 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor values must be finite")
        self.values = v


def cosine_distance(u: ObjectDescriptor, v: ObjectDescriptor) -> float:
    """``1 - u.v / (||u|| ||v||)`` with 64-bit accumulation; in [0, 2]."""
    a = np.asarray(u.values, dtype=np.float64)
    b = np.asarray(v.values, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"descriptor lengths differ: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine distance is undefined for zero vectors")
    d = 1.0 - float(a @ b) / (na * nb)
    return min(max(d, 0.0), 2.0)


def describe_fallback(crop: np.ndarray) -> ObjectDescriptor:
    """Deterministic non-neural descriptor: 32x32 RGB, mean-subtracted.

    The crop is bilinearly resized to 32x32, the three channel planes are
    concatenated row-major into 3072 values in [0, 1], and the vector mean
    is subtracted.  Adequate for exercising the matching machinery without
    a network backend; not expected to match its scale robustness.
    """
    arr = as_float_image(crop)
    if arr.size == 0:
        raise ValueError("crop must be non-empty")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    resized = resize_bilinear(arr, FALLBACK_SIDE, FALLBACK_SIDE)
    vec = np.concatenate([resized[..., c].ravel() for c in range(3)])
    vec = vec - vec.mean()
    return ObjectDescriptor(vec, FALLBACK, FALLBACK)


class SidecarClient:
    """Client for one activation-sidecar process.

    Spawns the process, consumes its handshake line, and then exchanges
    length-prefixed frames.  Requests on one connection are serialized;
    open several clients for parallelism.
    """

    def __init__(self, command: str | list[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise SidecarUnavailable("empty sidecar launch command")
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise SidecarUnavailable(f"cannot launch sidecar {argv!r}: {exc}") from exc
        self._lock = threading.Lock()
        self._next_id = 0
        line = self._proc.stdout.readline()
        if not line:
            raise SidecarUnavailable("sidecar exited before handshake")
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SidecarUnavailable(f"invalid handshake: {line!r}") from exc
        if hello.get("protocol") != 1:
            raise SidecarUnavailable(f"unsupported protocol: {hello.get('protocol')!r}")
        self.model = hello.get("model", "")
        self.layers = list(hello.get("layers", []))
        self.resolutions = list(hello.get("resolutions", []))

    def request(self, crop: np.ndarray, layer: str, resolution: int) -> np.ndarray:
        """Send one crop, return the flattened activation as float32."""
        if layer not in self.layers:
            raise ValueError(f"sidecar does not serve layer {layer!r}")
        if resolution not in self.resolutions:
            raise ValueError(f"sidecar does not serve resolution {resolution!r}")
        arr = as_float_image(crop)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        data = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
        h, w = data.shape[:2]
        with self._lock:
            if self._proc.poll() is not None:
                raise SidecarUnavailable("sidecar process has exited")
            self._next_id += 1
            req_id = self._next_id
            header = json.dumps(
                {"id": req_id, "layer": layer, "resolution": resolution, "width": w, "height": h}
            )
            try:
                self._proc.stdin.write(header.encode() + b"\n")
                self._proc.stdin.write(data.tobytes())
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise SidecarUnavailable("sidecar pipe is broken") from exc

            line = self._proc.stdout.readline()
            if not line:
                raise SidecarUnavailable("sidecar closed its output stream")
            try:
                resp = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed response line: {line!r}") from exc
            if resp.get("id") != req_id:
                raise ProtocolError(f"response id {resp.get('id')!r} != request id {req_id}")
            if "error" in resp:
                raise ProtocolError(f"sidecar error: {resp['error']}")
            shape = resp.get("shape")
            if not isinstance(shape, list) or not all(isinstance(d, int) and d > 0 for d in shape):
                raise ProtocolError(f"invalid shape field: {shape!r}")
            count = int(np.prod(shape))
            payload = self._read_exact(count * 4)
            if len(payload) != count * 4:
                raise ShapeMismatch(
                    f"declared {count} floats but received {len(payload)} bytes"
                )
        return np.frombuffer(payload, dtype="<f4").copy()

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = self._proc.stdout.read(remaining)
            if not chunk:
                break
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def describe_sidecar(
    crop: np.ndarray, layer: LayerId | str, resolution: int, channel: SidecarClient
) -> ObjectDescriptor:
    """Descriptor from the sidecar's activation of ``layer`` at ``resolution``."""
    layer_name = layer.value if isinstance(layer, LayerId) else str(layer)
    values = channel.request(crop, layer_name, int(resolution))
    return ObjectDescriptor(values, layer_name, int(resolution))
