"""Closed-form tangent kernels on graphs.

Three kernel flavors over aggregated node features, all bounded by 1 on
unit-norm inputs:

* ``ntk`` -- the depth-L ReLU tangent kernel on the sphere, computed by the
  recursion kappa_nn(1) = u, kappa_nn(l) = kappa_nn(l-1) * kappa0(kappa(l-1))
  + kappa(l) with kappa(l) = kappa1(kappa(l-1));
* ``gntk`` -- the graph kernel, the plain average of ``ntk`` over all pairs
  of aggregated node rows of the two graphs;
* ``ntk_vanilla`` -- the structure-blind baseline, ``ntk`` applied to the
  whole concatenated feature vector rescaled to unit norm.

``kbar_bruteforce`` evaluates the permutation-averaged additive kernel by
literal enumeration of both permutation groups; it exists purely as an
oracle for the identity between that kernel and ``gntk``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations as iter_permutations

import numpy as np

from .errors import DimensionMismatch, DomainError, NotUnitNorm, NumericalFailure, TooManyNodes
from .graphs import AggregatedGraph
from .ioutil import format_float

KERNEL_TAGS = ("gntk", "ntk-vanilla", "tangent-finite")

_INPUT_TOL = 1e-9
BRUTE_FORCE_MAX_NODES = 6


def _check_unit_interval(u):
    if np.max(np.abs(np.asarray(u, dtype=np.float64))) > 1.0 + _INPUT_TOL:
        raise DomainError(f"argument outside [-1, 1]: {u!r}")


def kappa0(u):
    """(pi - arccos u) / pi, elementwise; monotone from 0 at -1 to 1 at 1."""
    _check_unit_interval(u)
    u = np.clip(u, -1.0, 1.0)
    return (np.pi - np.arccos(u)) / np.pi


def kappa1(u):
    """(u (pi - arccos u) + sqrt(1 - u^2)) / pi, elementwise."""
    _check_unit_interval(u)
    u = np.clip(u, -1.0, 1.0)
    return (u * (np.pi - np.arccos(u)) + np.sqrt(1.0 - u * u)) / np.pi


def ntk_from_inner(u, depth: int):
    """Depth-``depth`` tangent kernel value(s) from inner product(s) ``u``.

    Runs the two-map recursion for ``depth`` levels and divides by
    ``depth``, its value at u = 1, so the kernel is exactly 1 on the
    diagonal and bounded by 1 everywhere (the raw recursion sums one unit
    per level).  Vectorized core shared by all kernel flavors; inputs are
    clamped to [-1, 1] to absorb rounding before the arccos calls.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    _check_unit_interval(u)
    kap = np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0)
    knn = kap.copy()
    for _ in range(depth - 1):
        k0 = kappa0(kap)
        kap = kappa1(kap)
        knn = knn * k0 + kap
    return knn / depth


def ntk(x: np.ndarray, y: np.ndarray, depth: int) -> float:
    """Tangent kernel of a depth-``depth`` ReLU network at unit vectors x, y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch(f"shape mismatch: {x.shape} vs {y.shape}")
    if abs(np.linalg.norm(x) - 1.0) > _INPUT_TOL or abs(np.linalg.norm(y) - 1.0) > _INPUT_TOL:
        raise NotUnitNorm("ntk inputs must lie on the unit sphere")
    return float(ntk_from_inner(float(x @ y), depth))


def _pair_inner(ga: AggregatedGraph, gb: AggregatedGraph) -> np.ndarray:
    if ga.dim != gb.dim:
        raise DimensionMismatch(f"feature dims differ: {ga.dim} vs {gb.dim}")
    # Canonical operand order: the BLAS product is evaluated identically for
    # (a, b) and (b, a), making the addend multiset bit-reproducible.
    if (ga.num_nodes, ga.hbar.tobytes()) <= (gb.num_nodes, gb.hbar.tobytes()):
        inner = ga.hbar @ gb.hbar.T
    else:
        inner = gb.hbar @ ga.hbar.T
    return np.clip(inner, -1.0, 1.0)


def gntk(ga: AggregatedGraph, gb: AggregatedGraph, depth: int) -> float:
    """Graph tangent kernel: mean of ntk over all node-row pairs.

    The addends are summed in sorted order, so the value is exactly
    symmetric in its arguments and exactly invariant under node
    permutations of either graph.
    """
    vals = ntk_from_inner(_pair_inner(ga, gb), depth).ravel()
    vals.sort()
    return float(vals.sum() / (ga.num_nodes * gb.num_nodes))


def kbar_bruteforce(ga: AggregatedGraph, gb: AggregatedGraph, depth: int) -> float:
    """Permutation-averaged additive kernel by literal double enumeration.

    Cost grows with (N!)^2; hard-capped at N <= 6 to keep the oracle honest.
    """
    if ga.dim != gb.dim:
        raise DimensionMismatch(f"feature dims differ: {ga.dim} vs {gb.dim}")
    if ga.num_nodes != gb.num_nodes:
        raise DimensionMismatch("permutation average needs equal node counts")
    n = ga.num_nodes
    if n > BRUTE_FORCE_MAX_NODES:
        raise TooManyNodes(f"brute force capped at {BRUTE_FORCE_MAX_NODES} nodes, got {n}")
    base = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            base[i, j] = ntk(ga.hbar[i], gb.hbar[j], depth)
    total = 0.0
    count = 0
    for c in iter_permutations(range(n)):
        ci = np.asarray(c)
        for cp in iter_permutations(range(n)):
            total += base[ci, np.asarray(cp)].sum() / n
            count += 1
    return total / count


def ntk_vanilla(ga: AggregatedGraph, gb: AggregatedGraph, depth: int) -> float:
    """Structure-blind kernel on concatenated aggregated features.

    Concatenating N unit rows gives norm sqrt(N); the stacked vectors are
    rescaled by 1/sqrt(N) so the sphere-restricted recursion applies.
    """
    if ga.dim != gb.dim or ga.num_nodes != gb.num_nodes:
        raise DimensionMismatch("concatenated kernel needs equal N and d")
    va = ga.hbar.ravel() / np.sqrt(ga.num_nodes)
    vb = gb.hbar.ravel() / np.sqrt(gb.num_nodes)
    return float(ntk_from_inner(float(va @ vb), depth))


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric Gram matrix over a graph sequence, tagged by kernel flavor."""

    entries: np.ndarray
    tag: str

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if self.tag not in KERNEL_TAGS:
            raise ValueError(f"unknown kernel tag {self.tag!r}")
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("kernel matrix must be square")
        if not np.all(np.isfinite(entries)):
            raise ValueError("kernel matrix must be finite")
        if np.max(np.abs(entries - entries.T), initial=0.0) > 1e-12:
            raise ValueError("kernel matrix must be symmetric within 1e-12")
        if self.tag in ("gntk", "ntk-vanilla"):
            if np.max(entries.diagonal(), initial=0.0) > 1.0 + 1e-12:
                raise ValueError("diagonal must not exceed 1")
        entries = np.array(entries, copy=True)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


_KERNEL_FUNCS = {"gntk": gntk, "ntk-vanilla": ntk_vanilla}


def kernel_matrix(seq, tag: str, depth: int) -> KernelMatrix:
    """Gram matrix of the tagged kernel: upper triangle computed, mirrored."""
    if tag not in _KERNEL_FUNCS:
        raise ValueError(f"kernel tag must be one of {sorted(_KERNEL_FUNCS)}, got {tag!r}")
    seq = list(seq)
    if not seq:
        raise ValueError("graph sequence must be nonempty")
    func = _KERNEL_FUNCS[tag]
    n = len(seq)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = func(seq[i], seq[j], depth)
            out[i, j] = v
            out[j, i] = v
    return KernelMatrix(out, tag)


def min_eigenvalue(k: KernelMatrix) -> float:
    """Smallest eigenvalue of the Gram matrix (symmetric eigensolve)."""
    try:
        return float(np.linalg.eigvalsh(np.asarray(k.entries))[0])
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolve failed: {exc}") from exc


def kernel_matrix_to_csv(k: KernelMatrix, path) -> None:
    """Row-major CSV dump at 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.asarray(k.entries):
            fh.write(",".join(format_float(v) for v in row) + "\n")


def kernel_matrix_from_csv(path, tag: str) -> KernelMatrix:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    return KernelMatrix(np.asarray(rows), tag)
