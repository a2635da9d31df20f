"""Named end-to-end architectures.

The architecture names defined here are the command-line vocabulary:

* video networks (input ``[N, 3, L, H, W]``): ``fully3d``, ``two-block1``,
  ``two-block2``, ``two-block2plus``, ``three-block2``, ``three-block2plus``,
  ``two-block3``;
* audio networks: ``audio-dnn-512``, ``audio-dnn-256`` (pooled features ``[N, F]``),
  ``audio-lstm-fixed``, ``audio-lstm-variable`` (segments ``[N, 87, F]``);
* ``feat-lstm``: precomputed per-frame feature sequences ``[N, T, D]``.

Every model emits two logits per sample; index 1 is the intoxicated class.
"""

from __future__ import annotations

import logging
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .blocks import Block, BlockKind, BlockSpec, build_block
from .config import settings
from .errors import ShapeError, UsageError
from .layers import (
    LSTM,
    BatchNorm,
    Dropout,
    GlobalAvgPool3d,
    LastStep,
    Layer,
    Linear,
    ReLU,
    Sequential,
    softmax,
)
from .tensor import NDTensor, Rng

logger = logging.getLogger(__name__)

NUM_CLASSES = 2
POSITIVE_CLASS = 1
DEFAULT_CHANNELS: tuple[int, ...] = (3, 64, 64, 128, 128)
FEAT_LSTM_DEFAULT_DIM = 4096

_F, _B1, _B2, _B2P, _B3 = (
    BlockKind.fully3d,
    BlockKind.block1,
    BlockKind.block2,
    BlockKind.block2plus,
    BlockKind.block3,
)

VIDEO_ARCHS: dict[str, tuple[BlockKind, ...]] = {
    "fully3d": (_F, _F, _F, _F),
    "two-block1": (_F, _F, _B1, _B1),
    "two-block2": (_F, _F, _B2, _B2),
    "two-block2plus": (_F, _F, _B2P, _B2P),
    "three-block2": (_F, _B2, _B2, _B2),
    "three-block2plus": (_F, _B2P, _B2P, _B2P),
    "two-block3": (_F, _F, _B3, _B3),
}

AUDIO_DNN_HIDDEN: dict[str, tuple[int, int]] = {
    "audio-dnn-512": (512, 256),
    "audio-dnn-256": (256, 128),
}
ALIASES = {
    "audio-dnn-512-256": "audio-dnn-512",
    "audio-dnn-256-128": "audio-dnn-256",
}
SEQUENCE_ARCHS = ("audio-lstm-fixed", "audio-lstm-variable", "feat-lstm")

ARCH_NAMES: tuple[str, ...] = (*VIDEO_ARCHS, *AUDIO_DNN_HIDDEN, *SEQUENCE_ARCHS)


class InputKind(str, Enum):
    """What a model consumes; drives dataset loading."""

    video = "video"
    pooled_audio = "pooled-audio"
    fixed_segments = "fixed-segments"
    variable_segments = "variable-segments"
    frame_features = "frame-features"


class NetworkArch(BaseModel):
    """A four-block video network: channel ladder, block kinds and classifier head."""

    model_config = ConfigDict(frozen=True)

    name: str
    blocks: tuple[BlockSpec, ...]
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    num_classes: int = NUM_CLASSES

    @field_validator("blocks")
    @classmethod
    def _four_blocks(cls, blocks: tuple[BlockSpec, ...]) -> tuple[BlockSpec, ...]:
        if len(blocks) != 4:
            raise ValueError(f"A video network has exactly 4 blocks, got {len(blocks)}")
        return blocks


class AudioArch(BaseModel):
    """Audio or feature-sequence classifier description."""

    model_config = ConfigDict(frozen=True)

    name: str
    input_dim: int = Field(ge=1)
    hidden: tuple[int, ...]
    steps: int | None = None


def canonical_name(name: str) -> str:
    """Resolve aliases and reject unknown architecture names."""
    resolved = ALIASES.get(name, name)
    if resolved not in ARCH_NAMES:
        raise UsageError(f"Unknown architecture {name!r}; expected one of {', '.join(ARCH_NAMES)}")
    return resolved


def is_video_arch(name: str) -> bool:
    return canonical_name(name) in VIDEO_ARCHS


def network_arch(name: str, channels: tuple[int, ...] = DEFAULT_CHANNELS) -> NetworkArch:
    """Describe a named video network for a channel ladder ``c0..c4``."""
    name = canonical_name(name)
    if name not in VIDEO_ARCHS:
        raise UsageError(f"{name!r} is not a video architecture")
    if len(channels) != 5 or any(c < 1 for c in channels):
        raise UsageError(f"Channel ladder needs 5 positive entries, got {list(channels)}")
    blocks = tuple(
        BlockSpec(kind=kind, cin=channels[i], cout=channels[i + 1]) for i, kind in enumerate(VIDEO_ARCHS[name])
    )
    return NetworkArch(name=name, blocks=blocks, channels=tuple(channels))


def input_kind(name: str) -> InputKind:
    name = canonical_name(name)
    if name in VIDEO_ARCHS:
        return InputKind.video
    if name in AUDIO_DNN_HIDDEN:
        return InputKind.pooled_audio
    if name == "audio-lstm-fixed":
        return InputKind.fixed_segments
    if name == "audio-lstm-variable":
        return InputKind.variable_segments
    return InputKind.frame_features


class Classifier(Layer):
    """Common surface of every named model."""

    arch_name: str = ""
    kind: InputKind = InputKind.video

    def predict_proba(self, x: NDTensor) -> NDTensor:
        """Softmax class probabilities ``[N, 2]``."""
        return softmax(self.forward(x))


class VideoNet(Classifier):
    """Four blocks, global average pooling over ``(L, H, W)``, linear head to 2 logits."""

    kind = InputKind.video

    def __init__(self, arch: NetworkArch, rng: Rng | None) -> None:
        super().__init__()
        self.arch = arch
        self.arch_name = arch.name
        self.blocks = self.add_child("blocks", Sequential(*(build_block(spec, rng) for spec in arch.blocks)))
        self.gap = self.add_child("gap", GlobalAvgPool3d())
        self.head = self.add_child("head", Linear(arch.channels[-1], arch.num_classes, rng))

    def block_layers(self) -> list[Block]:
        return list(self.blocks.children.values())

    def forward(self, x: NDTensor) -> NDTensor:
        if x.ndim != 5 or x.shape[1] != self.arch.channels[0]:
            raise ShapeError(f"{self.arch_name} expects [N, {self.arch.channels[0]}, L, H, W], got {x.shape}")
        return self.head.forward(self.gap.forward(self.blocks.forward(x)))

    def backward(self, grad: NDTensor) -> NDTensor:
        return self.blocks.backward(self.gap.backward(self.head.backward(grad)))


class AudioDNN(Classifier):
    """Two hidden layers, each linear, batch norm, ReLU and dropout, then a linear head.

    The hidden linears carry no bias: the batch norm that follows subtracts it again.
    """

    kind = InputKind.pooled_audio

    def __init__(self, arch: AudioArch, rng: Rng | None) -> None:
        super().__init__()
        self.arch = arch
        self.arch_name = arch.name
        first, second = arch.hidden
        drop_rng = rng.spawn() if rng is not None else None
        self.net = self.add_child(
            "net",
            Sequential(
                Linear(arch.input_dim, first, rng, bias=False),
                BatchNorm(first, axis=1),
                ReLU(),
                Dropout(rng=drop_rng),
                Linear(first, second, rng, bias=False),
                BatchNorm(second, axis=1),
                ReLU(),
                Dropout(rng=drop_rng),
                Linear(second, NUM_CLASSES, rng),
            ),
        )

    def forward(self, x: NDTensor) -> NDTensor:
        if x.ndim != 2 or x.shape[1] != self.arch.input_dim:
            raise ShapeError(f"{self.arch_name} expects [N, {self.arch.input_dim}], got {x.shape}")
        return self.net.forward(x)

    def backward(self, grad: NDTensor) -> NDTensor:
        return self.net.backward(grad)


class SequenceLSTM(Classifier):
    """Optional per-feature batch norm, single-layer LSTM, final hidden state, linear head."""

    def __init__(self, arch: AudioArch, rng: Rng | None, normalize: bool, kind: InputKind) -> None:
        super().__init__()
        self.arch = arch
        self.arch_name = arch.name
        self.kind = kind
        hidden = arch.hidden[0]
        layers: list[Layer] = []
        names: list[str] = []
        if normalize:
            layers.append(BatchNorm(arch.input_dim, axis=-1))
            names.append("bn")
        layers += [LSTM(arch.input_dim, hidden, rng), LastStep(), Linear(hidden, NUM_CLASSES, rng)]
        names += ["lstm", "last", "head"]
        self.net = self.add_child("net", Sequential(*layers, names=names))

    def forward(self, x: NDTensor) -> NDTensor:
        if x.ndim != 3 or x.shape[2] != self.arch.input_dim:
            raise ShapeError(f"{self.arch_name} expects [N, T, {self.arch.input_dim}], got {x.shape}")
        if self.arch.steps is not None and x.shape[1] != self.arch.steps:
            raise ShapeError(f"{self.arch_name} expects exactly {self.arch.steps} segments, got {x.shape[1]}")
        if x.shape[1] < 1:
            raise ShapeError("Sequence models need at least one time step")
        return self.net.forward(x)

    def backward(self, grad: NDTensor) -> NDTensor:
        return self.net.backward(grad)


def build_arch(
    name: str,
    rng: Rng | None,
    *,
    input_dim: int | None = None,
    channels: tuple[int, ...] = DEFAULT_CHANNELS,
    hidden: int | None = None,
) -> Classifier:
    """Construct a named model with seeded initialization.

    :param name: Architecture name (see module docstring).
    :param rng: Generator for weight and dropout-mask draws; ``None`` zero-fills
        weights, which is enough for audits.
    :param input_dim: Feature dimension for audio and feature-sequence models.
    :param channels: Channel ladder for video models.
    :param hidden: LSTM hidden size, defaults to ``settings.lstm_hidden``.
    :raises UsageError: On an unknown name or a missing ``input_dim``.
    """
    name = canonical_name(name)
    if name in VIDEO_ARCHS:
        model: Classifier = VideoNet(network_arch(name, channels), rng)
    else:
        if name == "feat-lstm" and input_dim is None:
            input_dim = FEAT_LSTM_DEFAULT_DIM
        if input_dim is None:
            raise UsageError(f"{name} needs an input feature dimension")
        if name in AUDIO_DNN_HIDDEN:
            model = AudioDNN(AudioArch(name=name, input_dim=input_dim, hidden=AUDIO_DNN_HIDDEN[name]), rng)
        else:
            size = hidden or settings.lstm_hidden
            steps = settings.segment_count if name.startswith("audio-lstm") else None
            arch = AudioArch(name=name, input_dim=input_dim, hidden=(size,), steps=steps)
            model = SequenceLSTM(arch, rng, normalize=name == "feat-lstm", kind=input_kind(name))
    logger.info("Built %s with %d parameters", name, model.parameter_count())
    return model
