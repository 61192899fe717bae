"""Gaussian-process posteriors, information gain, and reward-table sampling.

Posterior formulas use the regularized kernel solve

    mu    = k_cross^T (K + lambda I)^{-1} y
    sigma2 = k_diag - diag(k_cross^T (K + lambda I)^{-1} k_cross)

computed through a single Cholesky factorization.  Information gain of a
sequence is 0.5 * logdet(I + K / lambda).  Reward tables for the synthetic
benchmark are one multivariate-normal draw from the posterior conditioned
on a handful of standard-normal anchor observations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NumericalFailure
from .graphs import GraphDomain, aggregate_domain
from .ioutil import dumps_json
from .kernels import KernelMatrix, kernel_matrix
from .linalg import chol_solve_lower, chol_with_jitter, tri_solve_lower
from .rng import keyed_rng

REWARD_LAMBDA = 1e-4  # regularizer used when sampling benchmark rewards

_VAR_CLAMP = -1e-10


@dataclass(frozen=True)
class Observations:
    """Queried domain indices with their noisy reward values."""

    indices: tuple
    values: np.ndarray

    def __post_init__(self):
        indices = tuple(int(i) for i in self.indices)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or len(indices) != values.shape[0]:
            raise ValueError("indices and values must have equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("observation values must be finite")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class GpPosterior:
    mean: np.ndarray
    variance: np.ndarray
    regularizer: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.variance, dtype=np.float64)
        if self.regularizer <= 0:
            raise ValueError("regularizer must be positive")
        if not np.all(np.isfinite(mean)):
            raise ValueError("posterior mean must be finite")
        if np.min(var, initial=0.0) < _VAR_CLAMP:
            raise NumericalFailure(f"posterior variance below clamp: {var.min()}")
        var = np.maximum(var, 0.0)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)


@dataclass(frozen=True)
class RewardTable:
    """Ground-truth reward per domain graph, with its maximizer."""

    values: np.ndarray
    argmax: int
    anchors: int
    seed: int
    regularizer: float
    jitter: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("reward values must be finite")
        if int(np.argmax(values)) != self.argmax:
            raise ValueError("argmax inconsistent with values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def best_value(self) -> float:
        return float(self.values[self.argmax])


def _entries(k) -> np.ndarray:
    return np.asarray(k.entries if isinstance(k, KernelMatrix) else k, dtype=np.float64)


def posterior(k_train, k_cross, k_diag, obs: Observations, lam: float) -> GpPosterior:
    """GP posterior at query points given observations on the training set."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    k_diag = np.asarray(k_diag, dtype=np.float64)
    if len(obs) == 0:
        return GpPosterior(np.zeros_like(k_diag), k_diag.copy(), lam)
    kt = _entries(k_train)
    kc = np.asarray(k_cross, dtype=np.float64)
    t = len(obs)
    if kt.shape != (t, t):
        raise DimensionMismatch(f"train kernel is {kt.shape}, expected ({t}, {t})")
    if kc.shape[0] != t or kc.shape[1] != k_diag.shape[0]:
        raise DimensionMismatch(f"cross kernel is {kc.shape}, expected ({t}, {k_diag.shape[0]})")
    factor, _ = chol_with_jitter(kt + lam * np.eye(t))
    mean = kc.T @ chol_solve_lower(factor, obs.values)
    v = tri_solve_lower(factor, kc)
    var = k_diag - np.einsum("ij,ij->j", v, v)
    return GpPosterior(mean, var, lam)


def information_gain(k_seq, lam: float) -> float:
    """0.5 * logdet(I + K / lambda) via the Cholesky log-determinant."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    k = _entries(k_seq)
    if k.size == 0:
        return 0.0
    factor, _ = chol_with_jitter(np.eye(k.shape[0]) + k / lam)
    return float(max(np.sum(np.log(np.diag(factor))), 0.0))


def greedy_mig_curve(domain: GraphDomain, tag: str, depth: int, horizon: int, lam: float) -> np.ndarray:
    """Information-gain curve of greedy max-variance selection.

    Entry t-1 is the gain after t selections; selections may repeat domain
    points.  Greedy picks the graph with the largest current posterior
    variance, which maximizes the marginal gain 0.5*log(1 + var/lambda).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    aggs = aggregate_domain(domain)
    k = np.asarray(kernel_matrix(aggs, tag, depth).entries)
    n = len(domain)
    var = np.diag(k).copy()
    # v_rows accumulates L^{-1} K_S,: for the growing Cholesky factor L of
    # (K_SS + lam I); posterior variance needs only these rows.
    v_rows = np.zeros((horizon, n))
    curve = np.empty(horizon)
    gain = 0.0
    for t in range(horizon):
        chosen = int(np.argmax(var))
        gain += 0.5 * np.log1p(var[chosen] / lam)
        curve[t] = gain
        pivot = np.sqrt(var[chosen] + lam)
        v_rows[t] = (k[chosen, :] - v_rows[:t].T @ v_rows[:t, chosen]) / pivot
        var = np.maximum(var - v_rows[t] * v_rows[t], 0.0)
    return curve


def sample_reward(
    domain: GraphDomain,
    tag: str,
    depth: int,
    anchors: int = 5,
    seed: int = 0,
    lam: float = REWARD_LAMBDA,
) -> RewardTable:
    """Draw one benchmark reward function over the whole domain.

    Anchor indices are uniform without replacement, anchor values i.i.d.
    standard normal; the table is a single multivariate-normal draw from the
    resulting posterior (the prior when ``anchors`` is 0).  Deterministic
    per seed.
    """
    n = len(domain)
    if anchors < 0 or anchors > n:
        raise ValueError(f"anchors must be in [0, {n}]")
    aggs = aggregate_domain(domain)
    k = np.asarray(kernel_matrix(aggs, tag, depth).entries)
    if anchors == 0:
        mean = np.zeros(n)
        cov = k
    else:
        idx = np.sort(keyed_rng(seed, "reward-anchors").choice(n, size=anchors, replace=False))
        y = keyed_rng(seed, "reward-anchor-values").standard_normal(anchors)
        obs = Observations(tuple(int(i) for i in idx), y)
        sub = k[np.ix_(idx, idx)]
        cross = k[idx, :]
        factor, _ = chol_with_jitter(sub + lam * np.eye(anchors))
        mean = cross.T @ chol_solve_lower(factor, obs.values)
        v = tri_solve_lower(factor, cross)
        cov = k - v.T @ v
    factor, jitter = chol_with_jitter(cov)
    z = keyed_rng(seed, "reward-sample").standard_normal(n)
    values = mean + factor @ z
    return RewardTable(
        values=values,
        argmax=int(np.argmax(values)),
        anchors=anchors,
        seed=seed,
        regularizer=lam,
        jitter=jitter,
    )


def observe(table: RewardTable, index: int, noise_sigma: float, seed: int, step: int) -> float:
    """Reward at ``index`` plus N(0, noise_sigma^2) noise keyed by (seed, step)."""
    if not 0 <= index < len(table):
        raise IndexOutOfRange(f"index {index} outside domain of size {len(table)}")
    value = float(table.values[index])
    if noise_sigma == 0.0:
        return value
    eps = keyed_rng(seed, "observe", step).standard_normal()
    return value + noise_sigma * float(eps)


# ---------------------------------------------------------------------------
# serialization


def reward_to_json(table: RewardTable) -> str:
    return dumps_json(
        {
            "values": table.values,
            "argmax": table.argmax,
            "meta": {
                "anchors": table.anchors,
                "seed": table.seed,
                "lambda": table.regularizer,
                "jitter": table.jitter,
            },
        }
    )


def reward_from_json(text: str) -> RewardTable:
    doc = json.loads(text)
    meta = doc["meta"]
    return RewardTable(
        values=np.asarray(doc["values"], dtype=np.float64),
        argmax=int(doc["argmax"]),
        anchors=int(meta["anchors"]),
        seed=int(meta["seed"]),
        regularizer=float(meta["lambda"]),
        jitter=float(meta.get("jitter", 0.0)),
    )


def save_reward(table: RewardTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(reward_to_json(table) + "\n")


def load_reward(path) -> RewardTable:
    with open(path, "r", encoding="utf-8") as fh:
        return reward_from_json(fh.read())
