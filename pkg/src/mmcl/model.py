"""Dual-encoder model: per-modality encoders, projection heads, fused classifier.

Each modality gets its own encoder f and projection head g. Projections are
L2-normalized; fusion concatenates encoder features (S1 first); a single
linear layer over the fused features produces per-class logits.

Checkpoints use a self-describing binary container (JSON header + raw
row-major little-endian float32 tensors) rather than pickle, so they can be
parsed without this package. See :func:`save_checkpoint`.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .exceptions import CheckpointError, ConfigurationError
from .io_utils import atomic_write_bytes

CHECKPOINT_MAGIC = b"MMCLCKPT\x01"

SMALL_CONV_DIM = 64
RESNET34_DIM = 512


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture choice for one modality's encoder."""

    arch: str = "small_conv"
    in_channels: int = 4

    def out_dim(self) -> int:
        if self.arch == "small_conv":
            return SMALL_CONV_DIM
        if self.arch == "resnet34":
            return RESNET34_DIM
        raise ConfigurationError(f"unknown encoder architecture {self.arch!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Full architecture description; canonical text form feeds the config hash."""

    s1: EncoderSpec = field(default_factory=lambda: EncoderSpec(in_channels=2))
    s2: EncoderSpec = field(default_factory=lambda: EncoderSpec(in_channels=4))
    n_labels: int = 8
    projection_dim: int = 128

    def validate(self) -> None:
        for name, spec in (("s1", self.s1), ("s2", self.s2)):
            if spec.in_channels < 1:
                raise ConfigurationError(f"{name} encoder needs >= 1 input channel")
            spec.out_dim()  # raises on unknown arch
        if self.n_labels < 1:
            raise ConfigurationError("n_labels must be >= 1")
        if self.projection_dim < 2:
            raise ConfigurationError("projection_dim must be >= 2")

    def fused_dim(self) -> int:
        return self.s1.out_dim() + self.s2.out_dim()

    def to_dict(self) -> dict:
        return {
            "s1": {"arch": self.s1.arch, "in_channels": self.s1.in_channels},
            "s2": {"arch": self.s2.arch, "in_channels": self.s2.in_channels},
            "n_labels": self.n_labels,
            "projection_dim": self.projection_dim,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            s1=EncoderSpec(**d["s1"]),
            s2=EncoderSpec(**d["s2"]),
            n_labels=int(d["n_labels"]),
            projection_dim=int(d["projection_dim"]),
        )


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1, bias=False),
        nn.GroupNorm(4, c_out),
        nn.ReLU(inplace=True),
    )


class SmallConvEncoder(nn.Module):
    """Three stride-2 conv blocks (16/32/64 channels) + global average pool.

    GroupNorm keeps inference free of batch statistics, so a batch of one
    encodes identically to the same row inside a larger batch.
    """

    def __init__(self, in_channels: int):
        super().__init__()
        self.blocks = nn.Sequential(
            _conv_block(in_channels, 16),
            _conv_block(16, 32),
            _conv_block(32, 64),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.out_dim = SMALL_CONV_DIM

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] < 8 or x.shape[-1] < 8:
            raise ConfigurationError(
                f"small_conv needs patches of at least 8x8 pixels, got {tuple(x.shape[-2:])}"
            )
        return self.pool(self.blocks(x)).flatten(1)


class ResNet34Encoder(nn.Module):
    """torchvision resnet34 backbone with a channel-matched stem and no fc head."""

    def __init__(self, in_channels: int):
        super().__init__()
        from torchvision.models import resnet34

        net = resnet34(weights=None)
        net.conv1 = nn.Conv2d(in_channels, 64, kernel_size=7, stride=2, padding=3, bias=False)
        net.fc = nn.Identity()
        self.net = net
        self.out_dim = RESNET34_DIM

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def build_encoder(spec: EncoderSpec) -> nn.Module:
    if spec.arch == "small_conv":
        return SmallConvEncoder(spec.in_channels)
    if spec.arch == "resnet34":
        return ResNet34Encoder(spec.in_channels)
    raise ConfigurationError(f"unknown encoder architecture {spec.arch!r}")


class ProjectionHead(nn.Module):
    """Two-layer MLP d -> d -> k; callers normalize the output."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Linear(in_dim, in_dim),
            nn.ReLU(inplace=True),
            nn.Linear(in_dim, out_dim),
        )

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return self.layers(h)


class DualEncoderModel(nn.Module):
    """Encoders + projection heads + fused linear classifier for two modalities."""

    MODALITIES = ("s1", "s2")

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.encoder_s1 = build_encoder(config.s1)
        self.encoder_s2 = build_encoder(config.s2)
        self.head_s1 = ProjectionHead(config.s1.out_dim(), config.projection_dim)
        self.head_s2 = ProjectionHead(config.s2.out_dim(), config.projection_dim)
        self.classifier = nn.Linear(config.fused_dim(), config.n_labels)

    def _check_channels(self, x: torch.Tensor, modality: str) -> None:
        spec = self.config.s1 if modality == "s1" else self.config.s2
        if x.ndim != 4:
            raise ConfigurationError(
                f"{modality} batch must be 4-D (N, C, H, W), got shape {tuple(x.shape)}"
            )
        if x.shape[1] != spec.in_channels:
            raise ConfigurationError(
                f"{modality} batch has {x.shape[1]} channels, "
                f"encoder expects {spec.in_channels}"
            )

    def encode(self, x: torch.Tensor, modality: str) -> torch.Tensor:
        """Feature vector h for one modality's patch batch."""
        if modality not in self.MODALITIES:
            raise ConfigurationError(f"modality must be one of {self.MODALITIES}, got {modality!r}")
        self._check_channels(x, modality)
        encoder = self.encoder_s1 if modality == "s1" else self.encoder_s2
        return encoder(x)

    def project(self, h: torch.Tensor, modality: str) -> torch.Tensor:
        """Unit-normalized projection z of feature batch h."""
        if modality not in self.MODALITIES:
            raise ConfigurationError(f"modality must be one of {self.MODALITIES}, got {modality!r}")
        head = self.head_s1 if modality == "s1" else self.head_s2
        return torch.nn.functional.normalize(head(h), dim=1)

    def embed(self, x: torch.Tensor, modality: str) -> torch.Tensor:
        return self.project(self.encode(x, modality), modality)

    @staticmethod
    def fuse(h_s1: torch.Tensor, h_s2: torch.Tensor) -> torch.Tensor:
        """Concatenate encoder features, S1 block first."""
        if h_s1.shape[0] != h_s2.shape[0]:
            raise ConfigurationError(
                f"fuse needs matching batch sizes, got {h_s1.shape[0]} vs {h_s2.shape[0]}"
            )
        return torch.cat([h_s1, h_s2], dim=1)

    def classify_logits(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.shape[1] != self.config.fused_dim():
            raise ConfigurationError(
                f"fused features have dim {fused.shape[1]}, "
                f"classifier expects {self.config.fused_dim()}"
            )
        return self.classifier(fused)

    def classify(self, fused: torch.Tensor) -> torch.Tensor:
        """Per-class probabilities in (0, 1) via element-wise sigmoid."""
        return torch.sigmoid(self.classify_logits(fused))

    def forward(self, x_s1: torch.Tensor, x_s2: torch.Tensor) -> torch.Tensor:
        h1 = self.encode(x_s1, "s1")
        h2 = self.encode(x_s2, "s2")
        return self.classify_logits(self.fuse(h1, h2))


def save_checkpoint(model: DualEncoderModel, path: str | Path) -> None:
    """Write the model to a self-describing binary container, atomically.

    Layout: magic bytes, uint32 little-endian header length, UTF-8 JSON
    header, then the concatenated tensor bodies. The header records the
    canonical architecture config, its sha256 hash, and for every tensor its
    name, shape, dtype code ("<f4") and byte offset into the body. Bodies are
    row-major little-endian float32.
    """
    tensors = []
    bodies = []
    offset = 0
    for name, param in model.state_dict().items():
        arr = param.detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f4", "offset": offset}
        )
        bodies.append(raw)
        offset += len(raw)
    header = {
        "format": "mmcl-checkpoint",
        "version": 1,
        "config": model.config.to_dict(),
        "config_canonical": model.config.canonical_json(),
        "config_hash": model.config.config_hash(),
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = CHECKPOINT_MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(bodies)
    atomic_write_bytes(Path(path), blob)


def read_checkpoint_header(path: str | Path) -> dict:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a recognized checkpoint (bad magic)")
    (header_len,) = struct.unpack_from("<I", data, len(CHECKPOINT_MAGIC))
    start = len(CHECKPOINT_MAGIC) + 4
    header = json.loads(data[start : start + header_len].decode("utf-8"))
    header["_body_start"] = start + header_len
    return header


def load_checkpoint(
    path: str | Path,
    expected_config: ModelConfig | None = None,
) -> DualEncoderModel:
    """Rebuild a model from a checkpoint, verifying the stored config hash.

    Raises :class:`CheckpointError` if the container is malformed, its hash
    does not match its config, or ``expected_config`` disagrees with the
    stored architecture.
    """
    data = Path(path).read_bytes()
    header = read_checkpoint_header(path)
    config = ModelConfig.from_dict(header["config"])
    if config.config_hash() != header["config_hash"]:
        raise CheckpointError(f"{path}: stored config hash does not match stored config")
    if expected_config is not None and expected_config.to_dict() != config.to_dict():
        raise CheckpointError(
            "checkpoint architecture does not match the requested one: "
            f"stored {config.to_dict()}, requested {expected_config.to_dict()}"
        )
    model = DualEncoderModel(config)
    state = model.state_dict()
    body_start = header["_body_start"]
    seen = set()
    for entry in header["tensors"]:
        name = entry["name"]
        if name not in state:
            raise CheckpointError(f"checkpoint tensor {name!r} has no place in the model")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = body_start + entry["offset"]
        arr = np.frombuffer(data, dtype=entry["dtype"], count=count, offset=start)
        arr = arr.reshape(shape)
        if tuple(state[name].shape) != shape:
            raise CheckpointError(
                f"checkpoint tensor {name!r} has shape {shape}, "
                f"model expects {tuple(state[name].shape)}"
            )
        state[name] = torch.from_numpy(arr.copy())
        seen.add(name)
    missing = sorted(set(state) - seen)
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {missing}")
    model.load_state_dict(state)
    model.eval()
    return model
