"""ResNet-50 activation server.

Speaks the scalematch descriptor wire protocol on stdin/stdout: one JSON
handshake line, then per request a JSON header line plus raw 8-bit RGB
bytes in, and a JSON header line plus the activation tensor as
little-endian 32-bit floats out.

Served taps are the stage outputs of the backbone: ``pool1`` (first
max-pool), ``res2c``..``res5c`` (post-activation output of each residual
stage) and ``pool5`` (global average pool).  Crops are resized bilinearly
to the requested square input resolution and ImageNet-normalized before
the forward pass.  Small resolutions are fed at native size, so reported
shapes always describe the tensor actually produced.

Inference runs single-threaded in inference mode with fixed weights, so
identical requests produce bit-identical payloads.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import torch
from torchvision.models import resnet50

PROTOCOL_VERSION = 1
LAYERS = ("pool1", "res2c", "res3d", "res4f", "res5c", "pool5")
RESOLUTIONS = (224, 128, 64, 32)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_TAP_MODULES = {
    "pool1": "maxpool",
    "res2c": "layer1",
    "res3d": "layer2",
    "res4f": "layer3",
    "res5c": "layer4",
    "pool5": "avgpool",
}


def build_model(weights: str, seed: int, device: str) -> tuple[torch.nn.Module, str]:
    """Instantiate the backbone; returns (model, model tag for handshake).

    ``weights`` is ``imagenet`` (pretrained; fatal if unavailable),
    ``random`` (seeded initialization, for protocol testing without the
    pretrained weights), or a path to a state-dict file.
    """
    if weights == "imagenet":
        from torchvision.models import ResNet50_Weights

        try:
            model = resnet50(weights=ResNet50_Weights.IMAGENET1K_V1)
        except Exception as exc:  # missing download/cache is fatal by contract
            raise SystemExit(f"fatal: cannot load pretrained weights: {exc}") from exc
        tag = "resnet50-imagenet"
    elif weights == "random":
        torch.manual_seed(seed)
        model = resnet50(weights=None)
        tag = "resnet50-random"
    else:
        model = resnet50(weights=None)
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        except Exception as exc:
            raise SystemExit(f"fatal: cannot load weights from {weights}: {exc}") from exc
        tag = "resnet50-file"
    model.eval()
    return model.to(device), tag


class ActivationServer:
    def __init__(self, model: torch.nn.Module, device: str):
        self._model = model
        self._device = device
        self._taps: dict[str, torch.Tensor] = {}
        for layer, module_name in _TAP_MODULES.items():
            getattr(model, module_name).register_forward_hook(self._hook(layer))
        mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
        std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
        self._mean = mean.to(device)
        self._std = std.to(device)

    def _hook(self, layer: str):
        def capture(_module, _inputs, output):
            self._taps[layer] = output

        return capture

    def activations(self, crop: np.ndarray, layer: str, resolution: int) -> tuple[list[int], bytes]:
        """Forward one crop; returns (shape, row-major little-endian f32)."""
        tensor = torch.from_numpy(crop.astype(np.float32) / 255.0).permute(2, 0, 1)
        tensor = tensor.unsqueeze(0).to(self._device)
        tensor = torch.nn.functional.interpolate(
            tensor, size=(resolution, resolution), mode="bilinear", align_corners=False
        )
        tensor = (tensor - self._mean) / self._std
        self._taps.clear()
        with torch.inference_mode():
            self._model(tensor)
        out = self._taps[layer].detach().cpu()
        if layer == "pool5":
            values = out.reshape(-1)
            shape = [values.numel()]
        else:
            hwc = out.squeeze(0).permute(1, 2, 0).contiguous()
            shape = list(hwc.shape)
            values = hwc.reshape(-1)
        data = values.numpy().astype("<f4").tobytes()
        return shape, data


def _read_exact(stream, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def serve(inp, out, server: ActivationServer, model_tag: str) -> None:
    """Run the request loop until the input stream closes."""
    hello = {
        "protocol": PROTOCOL_VERSION,
        "model": model_tag,
        "layers": list(LAYERS),
        "resolutions": list(RESOLUTIONS),
    }
    out.write((json.dumps(hello) + "\n").encode())
    out.flush()

    while True:
        line = inp.readline()
        if not line:
            return

        def fail(req_id, message):
            out.write((json.dumps({"id": req_id, "error": message}) + "\n").encode())
            out.flush()

        try:
            req = json.loads(line)
            req_id = int(req["id"])
            layer = req["layer"]
            resolution = int(req["resolution"])
            width = int(req["width"])
            height = int(req["height"])
        except (ValueError, KeyError, TypeError) as exc:
            fail(-1, f"malformed request: {exc}")
            continue

        if width < 1 or height < 1:
            fail(req_id, f"invalid crop size {width}x{height}")
            continue
        payload = _read_exact(inp, width * height * 3)
        if payload is None:
            return
        if layer not in LAYERS:
            fail(req_id, f"unknown layer {layer!r}")
            continue
        if resolution not in RESOLUTIONS:
            fail(req_id, f"unsupported resolution {resolution}")
            continue
        try:
            crop = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
            shape, data = server.activations(crop, layer, resolution)
        except Exception as exc:
            fail(req_id, f"inference failed: {exc}")
            continue
        out.write((json.dumps({"id": req_id, "shape": shape}) + "\n").encode())
        out.write(data)
        out.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scalematch-sidecar",
        description="Serve ResNet-50 activations over the scalematch stdio protocol",
    )
    parser.add_argument("--device", default="cpu", help="torch device (default: cpu)")
    parser.add_argument(
        "--weights",
        default="imagenet",
        help="'imagenet' (pretrained, default), 'random' (seeded init, test use), or a state-dict path",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for --weights random")
    parser.add_argument("--threads", type=int, default=1,
                        help="torch CPU threads (1 keeps repeated requests bit-identical)")
    args = parser.parse_args(argv)

    torch.set_num_threads(args.threads)
    model, tag = build_model(args.weights, args.seed, args.device)
    server = ActivationServer(model, args.device)
    serve(sys.stdin.buffer, sys.stdout.buffer, server, tag)
    return 0


if __name__ == "__main__":
    sys.exit(main())
