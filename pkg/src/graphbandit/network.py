"""Finite-width ReLU networks in the lazy regime.

Architecture: a first layer ``W1 x`` with no scaling, hidden layers
``sqrt(2/m) W_l relu(.)``, and a readout ``sqrt(2) W_out relu(.)``.  The
graph network evaluates this row network on every aggregated node feature
and averages, which makes it invariant to node permutations.  Outputs are
forced to zero at initialization by subtracting a frozen snapshot of the
network; gradients are unaffected because the snapshot term is constant.

Gradient layout (used by every flat vector in this module): ``W1`` row-major,
then each hidden matrix in layer order, then ``W_out``; total length
``m*d + (L-1)*m^2 + m``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss
from .graphs import AggregatedGraph
from .rng import keyed_rng

_PARAMS_MAGIC = b"GBNETP01"


@dataclass(frozen=True)
class NetworkParams:
    """Weight matrices plus the frozen initialization snapshot."""

    weights: tuple
    frozen_init: tuple
    seed: int

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        fz = tuple(np.asarray(w, dtype=np.float64) for w in self.frozen_init)
        if len(ws) < 2:
            raise ValueError("need at least first layer and readout")
        if len(ws) != len(fz) or any(a.shape != b.shape for a, b in zip(ws, fz)):
            raise ValueError("frozen snapshot must mirror weight shapes")
        m, d = ws[0].shape
        for w in ws[1:-1]:
            if w.shape != (m, m):
                raise ValueError("hidden layers must be (m, m)")
        if ws[-1].shape != (1, m):
            raise ValueError("readout must be (1, m)")
        for w in ws + fz:
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")
        ws = tuple(_readonly(w) for w in ws)
        fz = tuple(_readonly(w) for w in fz)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "frozen_init", fz)

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_params(self) -> int:
        return sum(w.size for w in self.weights)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings and the two-part stopping rule.

    Training stops after ``max_steps`` updates, or earlier once the loss
    drops below ``stop_loss``, or once the relative decay of successive loss
    decrements falls below ``stop_rel_decay`` (None disables the decay
    rule).  ``lambda_reg`` weights the m*lambda*||theta-theta0||^2 term; the
    practical protocol trains adam without it.
    """

    optimizer: str = "adam"
    eta: float = 1e-3
    lambda_reg: float = 0.0
    max_steps: int = 100
    stop_loss: float = 1e-4
    stop_rel_decay: float | None = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("plain-gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.eta <= 0 or self.lambda_reg < 0 or self.max_steps < 1:
            raise ValueError("need eta > 0, lambda_reg >= 0, max_steps >= 1")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def init_params(m: int, depth: int, d: int, seed: int) -> NetworkParams:
    """Standard-normal i.i.d. weights, one keyed stream per layer."""
    if m < 1 or depth < 1 or d < 1:
        raise ValueError("width, depth and dim must be positive")
    shapes = [(m, d)] + [(m, m)] * (depth - 1) + [(1, m)]
    weights = tuple(
        keyed_rng(seed, "init-weights", layer).standard_normal(shape)
        for layer, shape in enumerate(shapes)
    )
    return NetworkParams(weights=weights, frozen_init=weights, seed=seed)


def flatten_grads(mats) -> np.ndarray:
    return np.concatenate([np.asarray(g).ravel() for g in mats])


def _forward_rows(x: np.ndarray, weights):
    """Per-row outputs with intermediates for backprop.

    Returns (out (n,), acts, masks) where acts[l] is the post-relu
    activation feeding weight l+1 and masks[l] the relu derivative at
    hidden layer l (zero at exactly zero).
    """
    w1, *hidden, wout = weights
    m = w1.shape[0]
    z = x @ w1.T
    masks = [z > 0]
    acts = [np.maximum(z, 0.0)]
    scale = np.sqrt(2.0 / m)
    for w in hidden:
        z = scale * (acts[-1] @ w.T)
        masks.append(z > 0)
        acts.append(np.maximum(z, 0.0))
    out = np.sqrt(2.0) * (acts[-1] @ wout[0])
    return out, acts, masks


def _backprop_rows(x: np.ndarray, weights, acts, masks, row_weights: np.ndarray):
    """Gradients of sum_r row_weights[r] * out_r w.r.t. each weight matrix."""
    w1, *hidden, wout = weights
    m = w1.shape[0]
    scale = np.sqrt(2.0 / m)
    grads = [None] * len(weights)
    grads[-1] = (np.sqrt(2.0) * (row_weights @ acts[-1]))[None, :]
    g = np.sqrt(2.0) * row_weights[:, None] * masks[-1] * wout[0][None, :]
    for layer in range(len(hidden) - 1, -1, -1):
        grads[layer + 1] = scale * (g.T @ acts[layer])
        g = scale * (g @ hidden[layer]) * masks[layer]
    grads[0] = g.T @ x
    return grads


def _check_dim(x_cols: int, params: NetworkParams):
    if x_cols != params.dim:
        raise DimensionMismatch(f"input dim {x_cols} != network dim {params.dim}")


def nn_forward(x: np.ndarray, params: NetworkParams) -> float:
    """Scalar output of the row network (no zero-at-init subtraction)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("nn_forward expects a single vector")
    _check_dim(x.shape[0], params)
    out, _, _ = _forward_rows(x[None, :], params.weights)
    return float(out[0])


def gnn_forward_raw(ga: AggregatedGraph, params: NetworkParams) -> float:
    """Average of the row network over the graph's aggregated node rows."""
    _check_dim(ga.dim, params)
    out, _, _ = _forward_rows(ga.hbar, params.weights)
    return float(out.mean())


def gnn_forward(ga: AggregatedGraph, params: NetworkParams) -> float:
    """Network output normalized to be exactly zero at initialization."""
    _check_dim(ga.dim, params)
    out, _, _ = _forward_rows(ga.hbar, params.weights)
    out0, _, _ = _forward_rows(ga.hbar, params.frozen_init)
    return float(out.mean() - out0.mean())


def gnn_gradient(ga: AggregatedGraph, params: NetworkParams) -> np.ndarray:
    """Exact reverse-mode gradient of gnn_forward_raw, flattened.

    Identical to the gradient of gnn_forward: the frozen term is constant.
    """
    _check_dim(ga.dim, params)
    x = ga.hbar
    _, acts, masks = _forward_rows(x, params.weights)
    row_weights = np.full(x.shape[0], 1.0 / x.shape[0])
    return flatten_grads(_backprop_rows(x, params.weights, acts, masks, row_weights))


def tangent_kernel_finite(ga: AggregatedGraph, gb: AggregatedGraph, params: NetworkParams) -> float:
    """Finite-width tangent kernel <g(a), g(b)> / m at the given parameters."""
    return float(gnn_gradient(ga, params) @ gnn_gradient(gb, params)) / params.width


def gradient_features(aggs, params: NetworkParams) -> np.ndarray:
    """Rows g(G; theta)/sqrt(m) for a list of graphs, via one shared forward.

    The row inner products of the result are exactly the finite tangent
    kernel values.
    """
    aggs = list(aggs)
    x = np.concatenate([ga.hbar for ga in aggs], axis=0)
    _check_dim(x.shape[1], params)
    _, acts, masks = _forward_rows(x, params.weights)
    bounds = np.cumsum([0] + [ga.num_nodes for ga in aggs])
    feats = np.empty((len(aggs), params.num_params))
    for i in range(len(aggs)):
        lo, hi = bounds[i], bounds[i + 1]
        row_weights = np.full(hi - lo, 1.0 / (hi - lo))
        grads = _backprop_rows(
            x[lo:hi],
            params.weights,
            [a[lo:hi] for a in acts],
            [mk[lo:hi] for mk in masks],
            row_weights,
        )
        feats[i] = flatten_grads(grads)
    feats /= np.sqrt(params.width)
    return feats


def batch_forward(aggs, params: NetworkParams) -> np.ndarray:
    """gnn_forward for a list of graphs with two shared passes."""
    aggs = list(aggs)
    x = np.concatenate([ga.hbar for ga in aggs], axis=0)
    _check_dim(x.shape[1], params)
    seg = np.repeat(np.arange(len(aggs)), [ga.num_nodes for ga in aggs])
    counts = np.asarray([ga.num_nodes for ga in aggs], dtype=np.float64)
    out, _, _ = _forward_rows(x, params.weights)
    out0, _, _ = _forward_rows(x, params.frozen_init)
    raw = np.bincount(seg, weights=out, minlength=len(aggs)) / counts
    raw0 = np.bincount(seg, weights=out0, minlength=len(aggs)) / counts
    return raw - raw0


def train_gnn(history, params: NetworkParams, cfg: TrainConfig) -> NetworkParams:
    """Optimize the regularized squared loss over the observation history.

    ``history`` is a sequence of (AggregatedGraph, y) pairs.  Returns fresh
    parameters; the input (and its frozen snapshot) is never mutated.
    Raises NonFiniteLoss if the loss or the weights stop being finite.
    """
    history = list(history)
    if not history:
        raise ValueError("history must be nonempty")
    aggs = [ga for ga, _ in history]
    y = np.asarray([float(v) for _, v in history])
    x = np.concatenate([ga.hbar for ga in aggs], axis=0)
    _check_dim(x.shape[1], params)
    counts = np.asarray([ga.num_nodes for ga in aggs], dtype=np.float64)
    seg = np.repeat(np.arange(len(aggs)), [ga.num_nodes for ga in aggs])
    t = len(history)

    out0, _, _ = _forward_rows(x, params.frozen_init)
    raw0 = np.bincount(seg, weights=out0, minlength=t) / counts

    weights = [np.array(w, copy=True) for w in params.weights]
    init = params.frozen_init
    m = params.width
    lam = cfg.lambda_reg

    mom = [np.zeros_like(w) for w in weights] if cfg.optimizer == "adam" else None
    vel = [np.zeros_like(w) for w in weights] if cfg.optimizer == "adam" else None

    losses = []
    for step in range(cfg.max_steps):
        out, acts, masks = _forward_rows(x, weights)
        preds = np.bincount(seg, weights=out, minlength=t) / counts - raw0
        res = preds - y
        loss = float(res @ res) / t
        if lam > 0.0:
            loss += m * lam * sum(float(np.sum((w - w0) ** 2)) for w, w0 in zip(weights, init))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss diverged at step {step}")
        losses.append(loss)
        if step >= 1 and loss <= cfg.stop_loss:
            break
        if step >= 2 and cfg.stop_rel_decay is not None:
            d_prev = losses[-2] - losses[-3]
            d_curr = losses[-1] - losses[-2]
            if d_prev == 0.0:
                break
            if d_prev < 0.0 and (d_prev - d_curr) / d_prev <= cfg.stop_rel_decay:
                break

        row_weights = (2.0 / t) * res[seg] / counts[seg]
        grads = _backprop_rows(x, weights, acts, masks, row_weights)
        if lam > 0.0:
            for k, (w, w0) in enumerate(zip(weights, init)):
                grads[k] = grads[k] + 2.0 * m * lam * (w - w0)
        if cfg.optimizer == "plain-gd":
            for k in range(len(weights)):
                weights[k] -= cfg.eta * grads[k]
        else:
            b1, b2 = cfg.adam_beta1, cfg.adam_beta2
            bc1 = 1.0 - b1 ** (step + 1)
            bc2 = 1.0 - b2 ** (step + 1)
            for k in range(len(weights)):
                mom[k] = b1 * mom[k] + (1.0 - b1) * grads[k]
                vel[k] = b2 * vel[k] + (1.0 - b2) * grads[k] ** 2
                weights[k] -= cfg.eta * (mom[k] / bc1) / (np.sqrt(vel[k] / bc2) + cfg.adam_eps)

    if any(not np.all(np.isfinite(w)) for w in weights):
        raise NonFiniteLoss("weights diverged during training")
    return replace(params, weights=tuple(weights))


# ---------------------------------------------------------------------------
# serialization


def save_params(params: NetworkParams, path) -> None:
    """Binary dump: magic, (m, L, d, seed) int64 LE, then weight blocks."""
    with open(path, "wb") as fh:
        fh.write(_PARAMS_MAGIC)
        fh.write(struct.pack("<4q", params.width, params.depth, params.dim, params.seed))
        for w in params.weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_params(path) -> NetworkParams:
    """Inverse of save_params; the frozen snapshot is regrown from the seed."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_PARAMS_MAGIC))
        if magic != _PARAMS_MAGIC:
            raise ValueError("not a network params file")
        m, depth, d, seed = struct.unpack("<4q", fh.read(32))
        shapes = [(m, d)] + [(m, m)] * (depth - 1) + [(1, m)]
        weights = []
        for shape in shapes:
            count = shape[0] * shape[1]
            block = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            weights.append(block.astype(np.float64))
    frozen = init_params(m, depth, d, seed).frozen_init
    return NetworkParams(weights=tuple(weights), frozen_init=frozen, seed=seed)
