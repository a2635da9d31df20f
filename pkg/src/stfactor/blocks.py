"""The five spatio-temporal block variants built from :mod:`stfactor.layers`.

Every block is ``sum(branches) -> ReLU -> max-pool``. A sequential kind (fully 3D,
2D+1D) has a single branch; the plane and axial kinds have three parallel branches
summed in a fixed order.

Stride placement: every branch output must have the shape a full ``3x3x3`` kernel
with the block's stride and padding would give. A degenerate kernel axis therefore
gets padding 0 and, in a parallel branch, the block's stride (kernel 1 with stride s
and no padding produces the same extent as kernel 3 with stride s and padding 1). In
the 2D+1D kinds the temporal stride lives on the 1D convolution and the spatial
stride on the 2D convolution.
"""

from __future__ import annotations

import logging
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from .errors import InvariantViolation, ShapeError
from .layers import (
    FULL_KERNEL,
    H_AXIS,
    HW_PLANE,
    L_AXIS,
    LH_PLANE,
    LW_PLANE,
    W_AXIS,
    Conv3d,
    ConvSpec,
    Layer,
    MaxPool3d,
    ReLU,
    Sequential,
    Triple,
)
from .tensor import NDTensor, Rng

logger = logging.getLogger(__name__)


class BlockKind(str, Enum):
    """Block variants, named as on the command line."""

    fully3d = "fully3d"
    block1 = "block1"
    block2 = "block2"
    block2plus = "block2plus"
    block3 = "block3"


class BlockSpec(BaseModel):
    """Declarative description of one block."""

    model_config = ConfigDict(frozen=True)

    kind: BlockKind
    cin: int = Field(ge=1)
    cout: int = Field(ge=1)
    stride: Triple = (2, 2, 2)
    padding: Triple = (1, 1, 1)
    pool_kernel: Triple = (2, 2, 2)
    pool_stride: Triple = (2, 2, 2)
    bias: bool = True


def branch_conv_spec(
    kernel: Triple,
    cin: int,
    cout: int,
    stride: Triple,
    padding: Triple,
    bias: bool,
    stride_degenerate: bool,
) -> ConvSpec:
    """Conv geometry for a (possibly degenerate) kernel inside a block.

    Active axes take the block padding and stride. Degenerate axes take padding 0 and
    either the block stride (parallel branches) or 1 (sequential factorization).
    """
    strides = tuple(s if (k > 1 or stride_degenerate) else 1 for k, s in zip(kernel, stride))
    pads = tuple(p if k > 1 else 0 for k, p in zip(kernel, padding))
    return ConvSpec(cin=cin, cout=cout, kernel=kernel, stride=strides, padding=pads, bias=bias)


def block_conv_specs(spec: BlockSpec) -> dict[str, ConvSpec]:
    """Return the convolution specs of a block keyed by parameter path."""
    common = {"stride": spec.stride, "padding": spec.padding, "bias": spec.bias}
    kind = spec.kind
    if kind is BlockKind.fully3d:
        return {"conv": branch_conv_spec(FULL_KERNEL, spec.cin, spec.cout, stride_degenerate=True, **common)}
    if kind is BlockKind.block1:
        return {
            name: branch_conv_spec(kernel, spec.cin, spec.cout, stride_degenerate=True, **common)
            for name, kernel in (("hw", HW_PLANE), ("lh", LH_PLANE), ("lw", LW_PLANE))
        }
    if kind in (BlockKind.block2, BlockKind.block2plus):
        return {
            "factorized.spatial": branch_conv_spec(HW_PLANE, spec.cin, spec.cout, stride_degenerate=False, **common),
            "factorized.temporal": branch_conv_spec(L_AXIS, spec.cout, spec.cout, stride_degenerate=False, **common),
        }
    if kind is BlockKind.block3:
        return {
            f"{name}.conv": branch_conv_spec(kernel, spec.cin, spec.cout, stride_degenerate=True, **common)
            for name, kernel in (("l", L_AXIS), ("h", H_AXIS), ("w", W_AXIS))
        }
    raise InvariantViolation(f"Unhandled block kind {kind}")


class Block(Layer):
    """One block: parallel or sequential convolution branches, ReLU, max-pool."""

    def __init__(self, spec: BlockSpec, rng: Rng | None) -> None:
        super().__init__()
        self.spec = spec
        convs = {name: Conv3d(conv_spec, rng) for name, conv_spec in block_conv_specs(spec).items()}
        kind = spec.kind
        if kind is BlockKind.fully3d:
            branches = {"conv": convs["conv"]}
        elif kind is BlockKind.block1:
            branches = {name: convs[name] for name in ("hw", "lh", "lw")}
        elif kind is BlockKind.block2:
            branches = {
                "factorized": Sequential(
                    convs["factorized.spatial"], convs["factorized.temporal"], names=["spatial", "temporal"]
                )
            }
        elif kind is BlockKind.block2plus:
            branches = {
                "factorized": Sequential(
                    convs["factorized.spatial"],
                    ReLU(),
                    convs["factorized.temporal"],
                    names=["spatial", "relu", "temporal"],
                )
            }
        else:
            branches = {
                name: Sequential(convs[f"{name}.conv"], ReLU(), names=["conv", "relu"]) for name in ("l", "h", "w")
            }
        self.branch_names = list(branches)
        for name, branch in branches.items():
            self.add_child(name, branch)
        self.relu = self.add_child("relu", ReLU())
        self.pool = self.add_child("pool", MaxPool3d(spec.pool_kernel, spec.pool_stride, ceil_mode=True))

    def conv_layers(self) -> list[Conv3d]:
        return [module for module in self.modules() if isinstance(module, Conv3d)]

    def forward(self, x: NDTensor) -> NDTensor:
        if x.ndim != 5 or x.shape[1] != self.spec.cin:
            raise ShapeError(f"{self.spec.kind.value} block expects [N, {self.spec.cin}, L, H, W], got {x.shape}")
        total = None
        for name in self.branch_names:
            out = self.children[name].forward(x)
            if total is None:
                total = out
            elif out.shape != total.shape:
                raise InvariantViolation(
                    f"{self.spec.kind.value} branch {name} produced {out.shape}, expected {total.shape}"
                )
            else:
                total = total + out
        return self.pool.forward(self.relu.forward(total))

    def backward(self, grad: NDTensor) -> NDTensor:
        grad = self.relu.backward(self.pool.backward(grad))
        grad_x = None
        for name in self.branch_names:
            branch_grad = self.children[name].backward(grad)
            grad_x = branch_grad if grad_x is None else grad_x + branch_grad
        return grad_x


def build_block(spec: BlockSpec, rng: Rng | None) -> Block:
    """Construct a block with seeded He-uniform weights (zeros without ``rng``)."""
    block = Block(spec, rng)
    logger.debug(
        "Built %s block %s->%s with %d weights",
        spec.kind.value,
        spec.cin,
        spec.cout,
        sum(conv.spec.weight_count for conv in block.conv_layers()),
    )
    return block
