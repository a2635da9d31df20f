"""Closed-form parameter and multiply-accumulate accounting for video networks.

With kernel extent ``k = 3`` the per-block weight counts are:

========================  ===========================
fully 3D, plane (Block1)  ``27 * cin * cout``
2D + 1D (+ inner ReLU)    ``9 * cin * cout + 3 * cout**2``
axial (Block3)            ``9 * cin * cout``
========================  ===========================

Biases are reported separately and never enter the decrease factor.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator

from .blocks import Block, BlockKind, BlockSpec, block_conv_specs
from .errors import ArithmeticDomainError, InvariantViolation
from .layers import ConvSpec, Triple, pool_output_extent
from .models import NetworkArch, network_arch
from .reports import BlockParamEntry, ParamReport

logger = logging.getLogger(__name__)

# Published "Conv. Parameters" and "Parameter decrease factor" columns.
REFERENCE_COUNTS: dict[str, tuple[float, float | None]] = {
    "fully3d": (7.8e5, None),
    "two-block1": (7.8e5, None),
    "two-block2": (4.37e5, 1.8),
    "two-block2plus": (4.37e5, 1.8),
    "three-block2": (3.75e5, 2.1),
    "three-block2plus": (3.75e5, 2.1),
    "two-block3": (3.4e5, 2.3),
}


def closed_form_weights(kind: BlockKind, cin: int, cout: int, k: int = 3) -> int:
    """Weight-parameter count of one block, without allocating anything."""
    if kind in (BlockKind.fully3d, BlockKind.block1):
        return k ** 3 * cin * cout
    if kind in (BlockKind.block2, BlockKind.block2plus):
        return k * k * cin * cout + k * cout * cout
    if kind is BlockKind.block3:
        return 3 * k * cin * cout
    raise InvariantViolation(f"Unhandled block kind {kind}")


def closed_form_biases(kind: BlockKind, cout: int) -> int:
    if kind is BlockKind.fully3d:
        return cout
    if kind in (BlockKind.block2, BlockKind.block2plus):
        return 2 * cout
    return 3 * cout


def allocated_counts(spec: BlockSpec) -> tuple[int, int]:
    """Weight and bias element counts of an actually allocated (zero-filled) block."""
    block = Block(spec, None)
    weights = sum(conv.params["weight"].size for conv in block.conv_layers())
    biases = sum(conv.params["bias"].size for conv in block.conv_layers() if "bias" in conv.params)
    return weights, biases


def _conv_chain(spec: BlockSpec) -> Iterator[tuple[str, ConvSpec, bool]]:
    """Yield ``(path, conv_spec, consumes_previous_output)`` for a block."""
    for path, conv_spec in block_conv_specs(spec).items():
        yield path, conv_spec, path == "factorized.temporal"


def block_flops(spec: BlockSpec, extents: Triple) -> tuple[list[int], Triple]:
    """MACs of every conv layer in a block and the block's pooled output extents."""
    per_layer: list[int] = []
    last_out: Triple = extents
    for _, conv_spec, chained in _conv_chain(spec):
        source = last_out if chained else extents
        out = conv_spec.output_extents(source)
        per_layer.append(out[0] * out[1] * out[2] * conv_spec.weight_count)
        last_out = out
    pooled = tuple(
        pool_output_extent(n, k, s, ceil_mode=True) for n, k, s in zip(last_out, spec.pool_kernel, spec.pool_stride)
    )
    return per_layer, pooled  # type: ignore[return-value]


def conv_layer_flops(arch: NetworkArch, input_shape: Triple) -> list[int]:
    """MACs per conv layer, in network order, for one sample of extents ``(L, H, W)``."""
    extents = input_shape
    layers: list[int] = []
    for spec in arch.blocks:
        per_layer, extents = block_flops(spec, extents)
        layers.extend(per_layer)
    return layers


def count_flops(arch: NetworkArch, input_shape: Triple) -> int:
    """Total multiply-accumulates of the conv layers (pooling, ReLU and head excluded)."""
    return sum(conv_layer_flops(arch, input_shape))


def decrease_factor(report: ParamReport, baseline: ParamReport) -> float:
    """Ratio ``baseline.total_weights / report.total_weights``."""
    if report.total_weights == 0:
        raise ArithmeticDomainError(f"{report.name} has zero weights; decrease factor undefined")
    return baseline.total_weights / report.total_weights


def rounded_factor(factor: float) -> float:
    """Decrease factor rounded to one decimal, as in the published comparison."""
    return round(factor, 1)


def _raw_report(arch: NetworkArch, input_shape: Triple | None, audit: bool) -> ParamReport:
    entries = []
    extents = input_shape
    for index, spec in enumerate(arch.blocks):
        weights = closed_form_weights(spec.kind, spec.cin, spec.cout)
        biases = closed_form_biases(spec.kind, spec.cout) if spec.bias else 0
        if audit:
            allocated = allocated_counts(spec)
            if allocated != (weights, biases):
                raise InvariantViolation(
                    f"{arch.name} block {index}: closed form {(weights, biases)} != allocated {allocated}"
                )
        flops = None
        if extents is not None:
            per_layer, extents = block_flops(spec, extents)
            flops = sum(per_layer)
        entries.append(
            BlockParamEntry(
                index=index, kind=spec.kind.value, cin=spec.cin, cout=spec.cout, weights=weights, biases=biases, flops=flops
            )
        )
    return ParamReport(
        name=arch.name,
        per_block=entries,
        total_weights=sum(e.weights for e in entries),
        total_biases=sum(e.biases for e in entries),
        decrease_factor=1.0,
        flops=sum(e.flops for e in entries) if input_shape is not None else None,
    )


def count_params(arch: NetworkArch, input_shape: Triple | None = None, audit: bool = True) -> ParamReport:
    """Parameter report of a video network, with its decrease factor vs. fully 3D.

    :param arch: Network description.
    :param input_shape: Optional ``(L, H, W)`` to also report conv MACs.
    :param audit: Cross-check the closed forms against allocated weight tensors.
    :raises InvariantViolation: When the closed form and the allocation disagree.
    """
    report = _raw_report(arch, input_shape, audit)
    if arch.name == "fully3d":
        return report
    baseline = _raw_report(network_arch("fully3d", arch.channels), None, audit=False)
    report.decrease_factor = decrease_factor(report, baseline)
    logger.debug("%s: %d weights, factor %.3f", arch.name, report.total_weights, report.decrease_factor)
    return report
