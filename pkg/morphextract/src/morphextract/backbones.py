"""Backbone registry: named feature extractors over aligned 256x256 crops.

Every backbone consumes a float32 batch of shape (N, 256, 256, 3) in
[0, 1] and returns a float32 matrix (N, output_dim).  The five published
extractor names are wired to their documented tap points but require
locally available weights (no downloads happen here); ``toy`` is a
seeded, dependency-free reference backbone for pipeline tests, and any
other name can be served by a local TorchScript export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import CROP_SIZE
from .errors import BackboneError

# Per-name defaults: documented variant, exported representation, width.
_KNOWN = {
    "rn50-in": dict(
        variant="imagenet1k",
        tap_point="penultimate pooled output (post-avgpool, pre-fc)",
        output_dim=2048,
    ),
    "dinov2": dict(
        variant="giant",
        tap_point="pooled general-purpose representation",
        output_dim=1536,
    ),
    "clip": dict(
        variant="L/14",
        tap_point="vision-encoder pooled output",
        output_dim=1024,
    ),
    "aim": dict(
        variant="600M",
        tap_point="pool-averaged trunk output",
        output_dim=1536,
    ),
    "dnadet": dict(
        variant="release",
        tap_point="penultimate pooled output",
        output_dim=2048,
    ),
    "toy": dict(
        variant="v1",
        tap_point="seeded random-projection probe",
        output_dim=64,
    ),
}

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ExtractorSpec:
    """Which representation a run exports: name, variant, tap, width."""

    name: str
    variant: str
    tap_point: str
    output_dim: int

    def __post_init__(self):
        if not self.name:
            raise BackboneError("empty extractor name")
        if self.output_dim < 1:
            raise BackboneError(f"output_dim must be >= 1, got {self.output_dim}")


def known_names() -> tuple[str, ...]:
    return tuple(_KNOWN)


def spec_for(name: str, variant: str | None = None, tap_point: str | None = None,
             output_dim: int | None = None) -> ExtractorSpec:
    """Fill in the documented defaults for a known name.

    Unknown names are allowed (served by a TorchScript export) but must
    state their output_dim explicitly.
    """
    canonical = name.lower() if name.lower() in _KNOWN else name
    defaults = _KNOWN.get(canonical, {})
    dim = output_dim if output_dim is not None else defaults.get("output_dim")
    if dim is None:
        raise BackboneError(
            f"unknown extractor {name!r} needs an explicit --output-dim"
        )
    return ExtractorSpec(
        name=canonical,
        variant=variant or defaults.get("variant", "custom"),
        tap_point=tap_point or defaults.get("tap_point", "torchscript forward"),
        output_dim=int(dim),
    )


def _check_batch(batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float32)
    if batch.ndim != 4 or batch.shape[1:] != (CROP_SIZE, CROP_SIZE, 3):
        raise BackboneError(
            f"expected aligned batch (N, {CROP_SIZE}, {CROP_SIZE}, 3), "
            f"got {batch.shape}"
        )
    return batch


def _check_width(spec: ExtractorSpec, features: np.ndarray) -> np.ndarray:
    if features.ndim != 2 or features.shape[1] != spec.output_dim:
        raise BackboneError(
            f"{spec.name} produced width {features.shape[-1]}, spec says "
            f"{spec.output_dim}"
        )
    return np.ascontiguousarray(features, dtype=np.float32)


class ToyBackbone:
    """Seeded two-layer random projection over 8x8 mean-pooled crops.

    Deterministic, numpy-only; exists so the full extraction pipeline can
    run and be tested without pretrained weights.
    """

    _POOL = 8

    def __init__(self, spec: ExtractorSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        side = CROP_SIZE // self._POOL
        width = side * side * 3
        hidden = 128
        self._w1 = (rng.standard_normal((width, hidden)) / np.sqrt(width)).astype(
            np.float32
        )
        self._w2 = (
            rng.standard_normal((hidden, spec.output_dim)) / np.sqrt(hidden)
        ).astype(np.float32)

    def embed(self, batch: np.ndarray) -> np.ndarray:
        batch = _check_batch(batch)
        n = batch.shape[0]
        side = CROP_SIZE // self._POOL
        pooled = batch.reshape(n, side, self._POOL, side, self._POOL, 3).mean(
            axis=(2, 4)
        )
        hidden = np.tanh(pooled.reshape(n, -1) @ self._w1)
        return _check_width(self.spec, hidden @ self._w2)


def _torch():
    try:
        import torch
    except ImportError as exc:
        raise BackboneError(
            "this backbone needs torch; install the [torch] extra"
        ) from exc
    return torch


def _to_torch_input(batch: np.ndarray, mean, std):
    torch = _torch()
    x = torch.from_numpy(_check_batch(batch)).permute(0, 3, 1, 2).contiguous()
    m = torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1)
    s = torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1)
    return (x - m) / s


class Resnet50Backbone:
    """torchvision ResNet-50 with the classifier head removed."""

    def __init__(self, spec: ExtractorSpec, checkpoint, device: str = "cpu"):
        torch = _torch()
        try:
            from torchvision.models import resnet50
        except ImportError as exc:
            raise BackboneError("rn50-in needs torchvision") from exc
        if checkpoint is None:
            raise BackboneError("rn50-in needs a local --checkpoint state dict")
        try:
            state = torch.load(checkpoint, map_location="cpu", weights_only=True)
        except (OSError, RuntimeError, ValueError) as exc:
            raise BackboneError(f"cannot load checkpoint {checkpoint}: {exc}") from exc
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        state = {k.removeprefix("module."): v for k, v in state.items()}
        model = resnet50(weights=None)
        try:
            model.load_state_dict(state)
        except RuntimeError as exc:
            raise BackboneError(f"checkpoint does not fit ResNet-50: {exc}") from exc
        model.fc = torch.nn.Identity()
        self.spec = spec
        self._device = device
        self._model = model.eval().to(device)

    def embed(self, batch: np.ndarray) -> np.ndarray:
        torch = _torch()
        x = _to_torch_input(batch, _IMAGENET_MEAN, _IMAGENET_STD).to(self._device)
        with torch.no_grad():
            out = self._model(x)
        return _check_width(self.spec, out.cpu().numpy())


class TorchscriptBackbone:
    """Any locally exported TorchScript module; spatial outputs are pooled."""

    def __init__(self, spec: ExtractorSpec, checkpoint, device: str = "cpu",
                 mean=_IMAGENET_MEAN, std=_IMAGENET_STD):
        torch = _torch()
        if checkpoint is None:
            raise BackboneError(
                f"{spec.name} needs a local --checkpoint TorchScript export"
            )
        try:
            module = torch.jit.load(checkpoint, map_location="cpu")
        except (OSError, RuntimeError, ValueError) as exc:
            raise BackboneError(f"cannot load checkpoint {checkpoint}: {exc}") from exc
        self.spec = spec
        self._device = device
        self._mean, self._std = mean, std
        self._module = module.eval().to(device)

    def embed(self, batch: np.ndarray) -> np.ndarray:
        torch = _torch()
        x = _to_torch_input(batch, self._mean, self._std).to(self._device)
        with torch.no_grad():
            out = self._module(x)
        if not torch.is_tensor(out):
            raise BackboneError(f"{self.spec.name} forward returned non-tensor")
        if out.dim() > 2:
            out = out.flatten(2).mean(dim=2)
        return _check_width(self.spec, out.cpu().numpy())


class HFVisionBackbone:
    """CLIP / DINOv2 vision encoders from a local transformers directory."""

    def __init__(self, spec: ExtractorSpec, checkpoint, device: str = "cpu"):
        torch = _torch()
        if checkpoint is None:
            raise BackboneError(
                f"{spec.name} needs a local --checkpoint model directory"
            )
        try:
            if spec.name == "clip":
                from transformers import CLIPVisionModel as cls
            else:
                from transformers import AutoModel as cls
        except ImportError as exc:
            raise BackboneError(f"{spec.name} needs transformers") from exc
        try:
            model = cls.from_pretrained(checkpoint, local_files_only=True)
        except (OSError, ValueError, EnvironmentError) as exc:
            raise BackboneError(
                f"cannot load local checkpoint {checkpoint}: {exc}"
            ) from exc
        self.spec = spec
        self._device = device
        self._model = model.eval().to(device)
        self._size = int(getattr(model.config, "image_size", CROP_SIZE))

    def embed(self, batch: np.ndarray) -> np.ndarray:
        torch = _torch()
        # Encoder-native normalization statistics are checkpoint-specific;
        # 0.5/0.5 matches the CLIP-family convention closely enough for a
        # fixed deterministic pipeline.
        x = _to_torch_input(batch, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5))
        if self._size != CROP_SIZE:
            x = torch.nn.functional.interpolate(
                x, size=(self._size, self._size), mode="bilinear",
                align_corners=False,
            )
        with torch.no_grad():
            out = self._model(pixel_values=x.to(self._device))
        pooled = getattr(out, "pooler_output", None)
        if pooled is None:
            pooled = out.last_hidden_state[:, 0]
        return _check_width(self.spec, pooled.cpu().numpy())


def build_backbone(spec: ExtractorSpec, checkpoint=None, device: str = "cpu",
                   seed: int = 0):
    """Instantiate the backbone serving ``spec``; weights must be local."""
    if spec.name == "toy":
        return ToyBackbone(spec, seed=seed)
    if spec.name == "rn50-in":
        return Resnet50Backbone(spec, checkpoint, device=device)
    if spec.name in ("clip", "dinov2"):
        return HFVisionBackbone(spec, checkpoint, device=device)
    # aim, dnadet, and any OTHER name run from a TorchScript export.
    return TorchscriptBackbone(spec, checkpoint, device=device)
