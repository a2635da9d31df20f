"""Reference oracles, the finite-difference engine and the parameter-count audit.

The oracles are literal nested-loop definitions meant for tiny inputs; they are slow on
purpose and share no code with the vectorized layers they check. Gradient checks
always run in 64-bit mode.

Relative error between an analytic gradient ``a`` and a numerical estimate ``b`` is
the largest coordinate-wise ``|a - b| / max(|a|, |b|, 1e-12)``; coordinates that
differ by no more than ``settings.gradcheck_atol`` count as agreeing. Central
differences are taken on per-element objectives (projected outputs, per-sample
losses) so elements a perturbation does not reach cancel exactly.

Random draws for gradient checks are rejected and redrawn until every ReLU input
and every max-pool winner/runner-up gap seen in a forward pass is at least
:data:`KINK_MARGIN` away from the non-differentiable point.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import TypeVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .analysis import REFERENCE_COUNTS, count_params, rounded_factor
from .blocks import Block, BlockKind, BlockSpec, build_block
from .config import settings
from .errors import DataError, UsageError
from .layers import (
    FULL_KERNEL,
    HW_PLANE,
    L_AXIS,
    LSTM,
    BatchNorm,
    Conv3d,
    ConvSpec,
    Dropout,
    GlobalAvgPool3d,
    LastStep,
    Layer,
    Linear,
    MaxPool3d,
    ReLU,
    Triple,
    pool_output_extent,
)
from .models import (
    VIDEO_ARCHS,
    AudioArch,
    AudioDNN,
    Classifier,
    InputKind,
    build_arch,
    canonical_name,
    input_kind,
    network_arch,
)
from .reports import OracleReport, dumps_sorted
from .tensor import NDTensor, Rng, precision
from .training import cross_entropy, sample_losses

logger = logging.getLogger(__name__)

ORACLE_TOL_F64 = 1e-10
ORACLE_TOL_F32 = 1e-5
GRADCHECK_TOL_MODEL = 1e-5
KINK_MARGIN = 1e-3
_REL_FLOOR = 1e-12
_MODEL_COORDS = 48
_MAX_DRAWS = 64
_TINY_DNN_HIDDEN = (8, 6)

LayerT = TypeVar("LayerT", bound=Layer)

LAYER_NAMES = (
    "conv3d",
    "conv-hw",
    "conv-l",
    "relu",
    "maxpool",
    "batchnorm",
    "dropout",
    "linear",
    "lstm",
    "last-step",
    "global-avg-pool",
)


def rel_err(a: np.ndarray, b: np.ndarray, atol: float = 0.0) -> float:
    """Largest coordinate-wise ``|a - b| / max(|a|, |b|, 1e-12)``.

    Coordinates with ``|a - b| <= atol`` contribute 0. Any non-finite coordinate makes
    the result ``inf``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return math.inf
    diff = np.abs(a - b)
    ratio = diff / np.maximum(np.maximum(np.abs(a), np.abs(b)), _REL_FLOOR)
    ratio[diff <= atol] = 0.0
    return float(ratio.max())


def _report(case_id: str, expected: np.ndarray, actual: np.ndarray, tolerance: float, seed: int | None) -> OracleReport:
    diff = np.abs(np.asarray(expected, dtype=np.float64) - np.asarray(actual, dtype=np.float64))
    max_abs = float(diff.max()) if diff.size else 0.0
    err = rel_err(expected, actual)
    finite = bool(np.all(np.isfinite(expected)) and np.all(np.isfinite(actual)))
    passed = finite and max_abs <= tolerance
    return OracleReport(case_id=case_id, max_abs_diff=max_abs, max_rel_err=err, tolerance=tolerance, passed=passed, seed=seed)


def conv_oracle(spec: ConvSpec, weight: NDTensor, bias: NDTensor | None, x: NDTensor) -> NDTensor:
    """Direct summation: ``out[n,co,l,h,w] = b[co] + sum x_pad[n,ci,l*s+dl,...] * w[co,ci,dl,dh,dw]``."""
    n, cin = x.shape[:2]
    out_l, out_h, out_w = spec.output_extents(x.shape[2:])
    pl, ph, pw = spec.padding
    sl, sh, sw = spec.stride
    kl, kh, kw = spec.kernel
    L, H, W = x.shape[2:]
    out = np.zeros((n, spec.cout, out_l, out_h, out_w), dtype=np.float64)
    for b, co, l, h, w in itertools.product(range(n), range(spec.cout), range(out_l), range(out_h), range(out_w)):
        acc = float(bias[co]) if bias is not None else 0.0
        for ci, dl, dh, dw in itertools.product(range(cin), range(kl), range(kh), range(kw)):
            il, ih, iw = l * sl + dl - pl, h * sh + dh - ph, w * sw + dw - pw
            if 0 <= il < L and 0 <= ih < H and 0 <= iw < W:
                acc += float(x[b, ci, il, ih, iw]) * float(weight[co, ci, dl, dh, dw])
        out[b, co, l, h, w] = acc
    return out


def maxpool_oracle(x: NDTensor, kernel: Triple = (2, 2, 2), stride: Triple = (2, 2, 2), ceil_mode: bool = True) -> NDTensor:
    """Scan every window, keeping the first maximum among in-bounds elements."""
    n, c = x.shape[:2]
    extents = [pool_output_extent(size, k, s, ceil_mode) for size, k, s in zip(x.shape[2:], kernel, stride)]
    out = np.empty((n, c, *extents), dtype=np.float64)
    for b, ch, l, h, w in itertools.product(range(n), range(c), *(range(e) for e in extents)):
        best = -math.inf
        for dl, dh, dw in itertools.product(*(range(k) for k in kernel)):
            il, ih, iw = l * stride[0] + dl, h * stride[1] + dh, w * stride[2] + dw
            if il < x.shape[2] and ih < x.shape[3] and iw < x.shape[4]:
                value = float(x[b, ch, il, ih, iw])
                if value > best:
                    best = value
        out[b, ch, l, h, w] = best
    return out


def lstm_oracle(w_ih: NDTensor, w_hh: NDTensor, bias: NDTensor, x: NDTensor) -> NDTensor:
    """Unrolled per-sample, per-unit LSTM returning the final hidden state ``[N, Hd]``."""
    n, steps, dim = x.shape
    hidden = w_hh.shape[1]

    def sig(z: float) -> float:
        return 1.0 / (1.0 + math.exp(-z))

    final = np.zeros((n, hidden), dtype=np.float64)
    for b in range(n):
        h = [0.0] * hidden
        c = [0.0] * hidden
        for t in range(steps):
            z = [
                float(bias[r])
                + sum(float(w_ih[r, d]) * float(x[b, t, d]) for d in range(dim))
                + sum(float(w_hh[r, k]) * h[k] for k in range(hidden))
                for r in range(4 * hidden)
            ]
            new_h = []
            for u in range(hidden):
                i, f = sig(z[u]), sig(z[hidden + u])
                g, o = math.tanh(z[2 * hidden + u]), sig(z[3 * hidden + u])
                c[u] = f * c[u] + i * g
                new_h.append(o * math.tanh(c[u]))
            h = new_h
        final[b] = h
    return final


def _relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, 0.0)


def _conv_of(layer: Layer, x: np.ndarray) -> np.ndarray:
    assert isinstance(layer, Conv3d)
    return conv_oracle(layer.spec, layer.params["weight"], layer.params.get("bias"), x)


def block_oracle(block: Block, x: NDTensor) -> NDTensor:
    """Recompute a block from its own parameters using only the loop oracles."""
    kind = block.spec.kind
    ch = block.children
    if kind is BlockKind.fully3d:
        total = _conv_of(ch["conv"], x)
    elif kind is BlockKind.block1:
        total = sum(_conv_of(ch[name], x) for name in ("hw", "lh", "lw"))
    elif kind in (BlockKind.block2, BlockKind.block2plus):
        seq = ch["factorized"].children
        mid = _conv_of(seq["spatial"], x)
        if kind is BlockKind.block2plus:
            mid = _relu(mid)
        total = _conv_of(seq["temporal"], mid)
    else:
        total = sum(_relu(_conv_of(ch[name].children["conv"], x)) for name in ("l", "h", "w"))
    return maxpool_oracle(_relu(total), block.spec.pool_kernel, block.spec.pool_stride, ceil_mode=True)


def _random_extents(rng: Rng, lo: int, hi: int) -> Triple:
    return tuple(lo + rng.below(hi - lo + 1) for _ in range(3))  # type: ignore[return-value]


def conv_oracle_case(seed: int, kernel: Triple = FULL_KERNEL) -> OracleReport:
    """Random geometry and data, vectorized convolution vs. direct summation."""
    rng = Rng(seed)
    with precision("float64"):
        stride = tuple(1 + rng.below(2) for _ in range(3))
        padding = tuple(rng.below(2) if k > 1 else 0 for k in kernel)
        spec = ConvSpec(cin=1 + rng.below(3), cout=1 + rng.below(3), kernel=kernel, stride=stride, padding=padding)
        extents = tuple(max(k, e) for k, e in zip(kernel, _random_extents(rng, 2, 6)))
        layer = Conv3d(spec, rng)
        layer.params["bias"][...] = rng.normal(spec.cout)
        x = rng.normal(2 * spec.cin * math.prod(extents)).reshape(2, spec.cin, *extents)
        expected = conv_oracle(spec, layer.params["weight"], layer.params["bias"], x)
        actual = layer.forward(x)
    return _report(f"conv/{'x'.join(map(str, kernel))}/{seed}", expected, actual, ORACLE_TOL_F64, seed)


def maxpool_oracle_case(seed: int) -> OracleReport:
    rng = Rng(seed)
    extents = _random_extents(rng, 1, 7)
    x = rng.normal(2 * 2 * math.prod(extents)).reshape(2, 2, *extents)
    actual = MaxPool3d().forward(x)
    return _report(f"maxpool/{seed}", maxpool_oracle(x), actual, ORACLE_TOL_F64, seed)


def block_oracle_case(kind: BlockKind | str, seed: int) -> OracleReport:
    kind = BlockKind(kind)
    rng = Rng(seed)
    with precision("float64"):
        spec = BlockSpec(kind=kind, cin=1 + rng.below(2), cout=1 + rng.below(3))
        block = build_block(spec, rng)
        for conv in block.conv_layers():
            conv.params["bias"][...] = 0.1 * rng.normal(conv.spec.cout)
        extents = _random_extents(rng, 2, 7)
        x = rng.normal(2 * spec.cin * math.prod(extents)).reshape(2, spec.cin, *extents)
        actual = block.forward(x)
        expected = block_oracle(block, x)
    return _report(f"block/{kind.value}/{seed}", expected, actual, ORACLE_TOL_F64, seed)


def lstm_oracle_case(seed: int) -> OracleReport:
    rng = Rng(seed)
    with precision("float64"):
        dim, hidden, steps = 1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(6)
        layer = LSTM(dim, hidden, rng)
        layer.params["bias"][...] = 0.1 * rng.normal(4 * hidden)
        x = rng.normal(2 * steps * dim).reshape(2, steps, dim)
        layer.forward(x)
        expected = lstm_oracle(layer.params["w_ih"], layer.params["w_hh"], layer.params["bias"], x)
    return _report(f"lstm/{seed}", expected, layer.final_hidden, ORACLE_TOL_F64, seed)


def oracle_suite(cases: int = 20, seed: int = 0) -> list[OracleReport]:
    """Every convolution variant, every block kind, max-pool and the LSTM on random cases."""
    reports: list[OracleReport] = []
    kernels = (FULL_KERNEL, HW_PLANE, L_AXIS, (3, 3, 1), (3, 1, 3), (1, 3, 1), (1, 1, 3))
    for index in range(cases):
        case_seed = seed * 10_007 + index
        reports.extend(conv_oracle_case(case_seed, kernel) for kernel in kernels)
        reports.append(maxpool_oracle_case(case_seed))
        reports.extend(block_oracle_case(kind, case_seed) for kind in BlockKind)
        reports.append(lstm_oracle_case(case_seed))
    return reports


def finite_diff(
    fn: Callable[[], float | np.ndarray],
    params: Sequence[np.ndarray],
    eps: float | None = None,
    coords: Sequence[Iterable[int] | None] | None = None,
) -> list[np.ndarray]:
    """Central-difference estimate of ``d sum(fn()) / d params``.

    ``fn`` may return a scalar or an array of per-element terms; the estimate sums
    ``fn(+eps) - fn(-eps)`` element by element. Parameters are perturbed in place and
    restored. ``coords`` optionally restricts each tensor to a set of flat indices;
    other coordinates are left at 0.

    :raises DataError: When ``fn`` returns a non-finite value.
    """
    eps = settings.gradcheck_eps if eps is None else eps
    estimates = []
    for index, param in enumerate(params):
        if param.dtype != np.float64:
            raise UsageError("finite differences need float64 parameters")
        grad = np.zeros_like(param)
        flat, gflat = param.reshape(-1), grad.reshape(-1)
        selected = coords[index] if coords is not None else None
        for i in range(flat.size) if selected is None else selected:
            original = flat[i]
            flat[i] = original + eps
            plus = np.asarray(fn(), dtype=np.float64)
            flat[i] = original - eps
            minus = np.asarray(fn(), dtype=np.float64)
            flat[i] = original
            if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
                raise DataError(f"Non-finite objective while perturbing tensor {index}, coordinate {i}")
            gflat[i] = float(np.sum(plus - minus)) / (2.0 * eps)
        estimates.append(grad)
    return estimates


def pool_window_gaps(
    x: NDTensor,
    kernel: Triple = (2, 2, 2),
    stride: Triple = (2, 2, 2),
    ceil_mode: bool = True,
) -> np.ndarray:
    """Winner minus runner-up of every max-pool window.

    Windows with a single in-bounds element, and windows won by an exact 0 (a value
    clamped by a preceding ReLU), report ``inf``.
    """
    extents = tuple(pool_output_extent(n, k, s, ceil_mode) for n, k, s in zip(x.shape[2:], kernel, stride))
    if math.prod(kernel) < 2:
        return np.full((*x.shape[:2], *extents), math.inf)
    pad_end = [max(0, (o - 1) * s + k - n) for o, s, k, n in zip(extents, stride, kernel, x.shape[2:])]
    pads = ((0, 0), (0, 0)) + tuple((0, p) for p in pad_end)
    xp = np.pad(np.asarray(x, dtype=np.float64), pads, mode="constant", constant_values=-np.inf)
    sel = (slice(None), slice(None)) + tuple(slice(0, o * s, s) for o, s in zip(extents, stride))
    windows = sliding_window_view(xp, kernel, axis=(2, 3, 4))[sel]
    ranked = np.sort(windows.reshape(*windows.shape[:5], -1), axis=-1)
    top, second = ranked[..., -1], ranked[..., -2]
    gaps = np.where(np.isfinite(second), top - second, math.inf)
    return np.where(top == 0.0, math.inf, gaps)


def kink_margin(layer: Layer, x: np.ndarray) -> float:
    """Distance of one forward pass from the nearest non-differentiable point.

    This is the smallest ``|input|`` of any ReLU and the smallest winner/runner-up gap
    of any max-pool window inside ``layer``; ``inf`` when there is neither.
    """
    margins = [math.inf]
    patched: list[Layer] = []

    def recording(module: Layer) -> Callable[[np.ndarray], np.ndarray]:
        forward = module.forward

        def forward_and_record(inp: np.ndarray) -> np.ndarray:
            if isinstance(module, ReLU):
                margins.append(float(np.min(np.abs(inp), initial=math.inf)))
            else:
                gaps = pool_window_gaps(inp, module.kernel, module.stride, module.ceil_mode)
                margins.append(float(np.min(gaps, initial=math.inf)))
            return forward(inp)

        return forward_and_record

    for module in layer.modules():
        if isinstance(module, (ReLU, MaxPool3d)):
            module.forward = recording(module)  # type: ignore[method-assign]
            patched.append(module)
    try:
        layer.forward(x)
    finally:
        for module in patched:
            vars(module).pop("forward", None)
    return min(margins)


def draw_clear_of_kinks(
    draw: Callable[[Rng], tuple[LayerT, np.ndarray]],
    rng: Rng,
    margin: float = KINK_MARGIN,
    max_draws: int = _MAX_DRAWS,
) -> tuple[LayerT, np.ndarray]:
    """Call ``draw(rng)`` until its layer and input stay ``margin`` away from every kink.

    After ``max_draws`` rejections the draw with the widest margin is returned and a
    warning is logged.
    """
    best: tuple[float, LayerT, np.ndarray] | None = None
    for attempt in range(max_draws):
        layer, x = draw(rng)
        seen = kink_margin(layer, x)
        if seen >= margin:
            if attempt:
                logger.debug("Accepted draw %d with kink margin %.3e", attempt, seen)
            return layer, x
        if best is None or seen > best[0]:
            best = (seen, layer, x)
    assert best is not None
    logger.warning("No draw cleared the kinks by %.1e after %d attempts (best %.3e)", margin, max_draws, best[0])
    return best[1], best[2]


def _projection_loss(layer: Layer, x: np.ndarray, rng: Rng) -> tuple[Callable[[], np.ndarray], Callable[[], np.ndarray]]:
    """``L = sum(r * layer(x))`` for a fixed random ``r``; returns its terms and its backward."""
    shape = layer.forward(x).shape
    r = rng.normal(math.prod(shape)).reshape(shape)

    def loss_terms() -> np.ndarray:
        return r * layer.forward(x)

    def backward() -> np.ndarray:
        layer.zero_grad()
        layer.forward(x)
        return layer.backward(r)

    return loss_terms, backward


def _check(
    case_id: str,
    layer: Layer,
    x: np.ndarray,
    loss: Callable[[], float | np.ndarray],
    backward: Callable[[], np.ndarray],
    eps: float,
    tol: float,
    seed: int,
    rng: Rng | None = None,
    max_coords: int | None = None,
) -> OracleReport:
    grad_x = backward()
    names, tensors, analytic = [], [], []
    for name, value, grad in layer.named_parameters():
        names.append(name)
        tensors.append(value)
        analytic.append(grad.copy())
    names.append("input")
    tensors.append(x)
    analytic.append(grad_x)
    coords = None
    if max_coords is not None and rng is not None:
        coords = [
            None if t.size <= max_coords else sorted({rng.below(t.size) for _ in range(max_coords)}) for t in tensors
        ]
    try:
        numeric = finite_diff(loss, tensors, eps, coords)
    except DataError as exc:
        return OracleReport(
            case_id=case_id, max_abs_diff=math.inf, max_rel_err=math.inf, tolerance=tol, passed=False, seed=seed, detail=str(exc)
        )
    worst, worst_name, max_abs = 0.0, "", 0.0
    for index, (name, a, b) in enumerate(zip(names, analytic, numeric)):
        if coords is not None and coords[index] is not None:
            a = a.reshape(-1)[coords[index]]
            b = b.reshape(-1)[coords[index]]
        err = rel_err(a, b, settings.gradcheck_atol)
        max_abs = max(max_abs, float(np.max(np.abs(a - b), initial=0.0)))
        if err > worst or not worst_name:
            worst, worst_name = err, name
    passed = math.isfinite(worst) and worst <= tol
    if not passed:
        logger.warning("Gradient check %s failed on %s: rel err %.3e (seed %d)", case_id, worst_name, worst, seed)
    return OracleReport(
        case_id=case_id, max_abs_diff=max_abs, max_rel_err=worst, tolerance=tol, passed=passed, seed=seed, detail=worst_name
    )


def _layer_and_input(name: str, rng: Rng) -> tuple[Layer, np.ndarray]:
    def normal(*shape: int) -> np.ndarray:
        return rng.normal(math.prod(shape)).reshape(shape)

    if name in ("conv3d", "conv-hw", "conv-l"):
        kernel = {"conv3d": FULL_KERNEL, "conv-hw": HW_PLANE, "conv-l": L_AXIS}[name]
        spec = ConvSpec(cin=2, cout=3, kernel=kernel, stride=(2, 1, 2), padding=tuple(1 if k > 1 else 0 for k in kernel))
        layer: Layer = Conv3d(spec, rng)
        layer.params["bias"][...] = normal(3)
        return layer, normal(2, 2, 4, 5, 4)
    if name == "relu":
        return ReLU(), normal(3, 4, 5)
    if name == "maxpool":
        return MaxPool3d(), normal(2, 2, 3, 5, 4)
    if name == "batchnorm":
        layer = BatchNorm(3, axis=1)
        layer.params["gamma"][...] = 1.0 + 0.5 * normal(3)
        layer.params["beta"][...] = normal(3)
        return layer, normal(4, 3, 2, 3, 2)
    if name == "dropout":
        return Dropout(0.5, Rng(rng.next_u64())), normal(4, 6)
    if name == "linear":
        layer = Linear(5, 3, rng)
        layer.params["bias"][...] = normal(3)
        return layer, normal(4, 5)
    if name == "lstm":
        layer = LSTM(3, 4, rng)
        layer.params["bias"][...] = 0.1 * normal(16)
        return layer, normal(2, 5, 3)
    if name == "last-step":
        return LastStep(), normal(2, 4, 3)
    if name == "global-avg-pool":
        return GlobalAvgPool3d(), normal(2, 3, 2, 3, 4)
    raise UsageError(f"Unknown layer {name!r}; expected one of {', '.join(LAYER_NAMES)}")


def gradcheck_layer(name: str, seed: int = 0, eps: float | None = None, tol: float | None = None) -> OracleReport:
    """Finite-difference check of one layer's parameter and input gradients."""
    eps = settings.gradcheck_eps if eps is None else eps
    tol = settings.gradcheck_tol if tol is None else tol
    if name not in LAYER_NAMES:
        raise UsageError(f"Unknown layer {name!r}; expected one of {', '.join(LAYER_NAMES)}")
    rng = Rng(seed)
    with precision("float64"):
        layer, x = draw_clear_of_kinks(lambda r: _layer_and_input(name, r), rng)
        if isinstance(layer, Dropout):
            mask_seed = layer.rng.seed
            forward = layer.forward

            def fixed_mask_forward(inp: np.ndarray) -> np.ndarray:
                layer.rng = Rng(mask_seed)
                return forward(inp)

            layer.forward = fixed_mask_forward  # type: ignore[method-assign]
        loss, backward = _projection_loss(layer, x, rng)
        return _check(f"layer/{name}", layer, x, loss, backward, eps, tol, seed)


def _block_and_input(kind: BlockKind, rng: Rng) -> tuple[Block, np.ndarray]:
    block = build_block(BlockSpec(kind=kind, cin=2, cout=3), rng)
    for conv in block.conv_layers():
        conv.params["bias"][...] = 0.1 * rng.normal(conv.spec.cout)
    return block, rng.normal(2 * 2 * 4 * 6 * 5).reshape(2, 2, 4, 6, 5)


def gradcheck_block(kind: BlockKind | str, seed: int = 0, eps: float | None = None, tol: float | None = None) -> OracleReport:
    eps = settings.gradcheck_eps if eps is None else eps
    tol = settings.gradcheck_tol if tol is None else tol
    try:
        kind = BlockKind(kind)
    except ValueError as exc:
        raise UsageError(f"Unknown block kind {kind!r}; expected one of {', '.join(k.value for k in BlockKind)}") from exc
    rng = Rng(seed)
    with precision("float64"):
        block, x = draw_clear_of_kinks(lambda r: _block_and_input(kind, r), rng)
        loss, backward = _projection_loss(block, x, rng)
        return _check(f"block/{kind.value}", block, x, loss, backward, eps, tol, seed)


def _tiny_model(name: str, rng: Rng) -> tuple[Classifier, np.ndarray]:
    """A shrunken copy of a named model, in training mode with dropout disabled."""
    kind = input_kind(name)
    if kind is InputKind.video:
        model = build_arch(name, rng, channels=(3, 2, 3, 2, 3))
        x = rng.normal(2 * 3 * 8 * 8 * 8).reshape(2, 3, 8, 8, 8)
    elif kind is InputKind.pooled_audio:
        model = AudioDNN(AudioArch(name=name, input_dim=4, hidden=_TINY_DNN_HIDDEN), rng)
        x = rng.normal(4 * 4).reshape(4, 4)
    else:
        steps = settings.segment_count if name.startswith("audio-lstm") else 6
        model = build_arch(name, rng, input_dim=3, hidden=4)
        x = rng.normal(2 * steps * 3).reshape(2, steps, 3)
    model.train()
    for module in model.modules():
        if isinstance(module, Dropout):
            module.eval()
    return model, x


def gradcheck_model(name: str, seed: int = 0, eps: float | None = None, tol: float | None = None) -> OracleReport:
    """End-to-end check of a shrunken named model under the cross-entropy loss.

    Video models get a ``3, 2, 3, 2, 3`` channel ladder and audio DNNs hidden widths
    ``8, 6``. Dropout layers are switched to eval mode; large tensors are checked on
    a seeded sample of coordinates.
    """
    eps = settings.gradcheck_eps if eps is None else eps
    tol = GRADCHECK_TOL_MODEL if tol is None else tol
    name = canonical_name(name)
    rng = Rng(seed)
    with precision("float64"):
        model, x = draw_clear_of_kinks(lambda r: _tiny_model(name, r), rng)
        labels = np.arange(x.shape[0]) % 2

        def loss_terms() -> np.ndarray:
            return sample_losses(model.forward(x), labels) / x.shape[0]

        def backward() -> np.ndarray:
            model.zero_grad()
            _, grad = cross_entropy(model.forward(x), labels)
            return model.backward(grad)

        return _check(f"model/{model.arch_name}", model, x, loss_terms, backward, eps, tol, seed, rng, _MODEL_COORDS)


def gradcheck(target: str, name: str, seed: int = 0, eps: float | None = None, tol: float | None = None) -> OracleReport:
    """Dispatch on ``target`` (``layer``, ``block`` or ``model``)."""
    if target == "layer":
        return gradcheck_layer(name, seed, eps, tol)
    if target == "block":
        return gradcheck_block(name, seed, eps, tol)
    if target == "model":
        return gradcheck_model(name, seed, eps, tol)
    raise UsageError(f"Unknown gradcheck target {target!r}; expected layer, block or model")


def parameter_audit() -> list[OracleReport]:
    """Check every named video network against the published parameter comparison.

    Each row must match its allocated tensors exactly, land within 1% of the published
    total and reproduce the published decrease factor after rounding; the plane
    network must equal the fully 3D network exactly.
    """
    reports = []
    totals = {}
    for name in VIDEO_ARCHS:
        published, factor = REFERENCE_COUNTS[name]
        try:
            report = count_params(network_arch(name), audit=True)
        except Exception as exc:  # noqa: BLE001 - a failing row is reported, not raised
            reports.append(
                OracleReport(case_id=f"params/{name}", max_abs_diff=math.inf, max_rel_err=math.inf, tolerance=0.01, passed=False, detail=str(exc))
            )
            continue
        totals[name] = report.total_weights
        rel = abs(1.0 - report.total_weights / published)
        expected_factor = 1.0 if factor is None else factor
        factor_ok = rounded_factor(report.decrease_factor) == expected_factor
        problems = []
        if rel > 0.01:
            problems.append(f"total {report.total_weights} is {rel:.2%} from {published:g}")
        if not factor_ok:
            problems.append(f"factor {report.decrease_factor:.3f} does not round to {expected_factor}")
        reports.append(
            OracleReport(
                case_id=f"params/{name}",
                max_abs_diff=abs(report.total_weights - published),
                max_rel_err=rel,
                tolerance=0.01,
                passed=not problems,
                detail="; ".join(problems) or f"total {report.total_weights}, factor {report.decrease_factor:.3f}",
            )
        )
    if "two-block1" in totals and "fully3d" in totals:
        diff = abs(totals["two-block1"] - totals["fully3d"])
        reports.append(
            OracleReport(
                case_id="params/two-block1==fully3d",
                max_abs_diff=float(diff),
                max_rel_err=diff / totals["fully3d"],
                tolerance=0.0,
                passed=diff == 0,
            )
        )
    return reports


def write_reports(path: str | Path | None, reports: Iterable[OracleReport]) -> list[str]:
    """Serialize reports as sorted-key JSON lines, optionally to ``path``."""
    lines = [dumps_sorted(report) for report in reports]
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return lines


def summarize(reports: Sequence[OracleReport]) -> dict[str, int]:
    failed = [r for r in reports if not r.passed]
    for report in failed:
        logger.error("Check %s failed: %s", report.case_id, report.detail or f"rel err {report.max_rel_err:.3e}")
    return {"total": len(reports), "failed": len(failed)}


__all__ = [
    "KINK_MARGIN",
    "LAYER_NAMES",
    "block_oracle",
    "conv_oracle",
    "draw_clear_of_kinks",
    "finite_diff",
    "gradcheck",
    "gradcheck_block",
    "gradcheck_layer",
    "gradcheck_model",
    "kink_margin",
    "lstm_oracle",
    "maxpool_oracle",
    "oracle_suite",
    "parameter_audit",
    "pool_window_gaps",
    "rel_err",
    "write_reports",
]
