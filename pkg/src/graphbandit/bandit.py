"""Confidence-set bandit algorithms on graph domains.

The posterior width sigma_hat comes from network gradients at
initialization: with phi = g / sqrt(m),

    sigma2 = phi^T (lam I + (1/t) sum_i phi_i phi_i^T)^{-1} phi,

evaluated either through the algebraically equivalent t x t dual form
(1/lam) * [k(G,G) - k_vec^T (K_t + t lam I)^{-1} k_vec], or with the design
matrix replaced by its diagonal (the cheap approximation used by the
practical protocol).  The center mu_hat is the trained network's output.

Two algorithm families are provided: phased elimination (episodic
max-variance exploration followed by confidence-interval pruning) and the
classic UCB rule.  Each accepts a ``gnn`` model operating on aggregated
node features or an ``nn`` model operating on the unit-rescaled
concatenation of all aggregated features.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CholeskyFailure,
    DimensionMismatch,
    EmptyPlausibleSet,
    NumericalFailure,
    SingularDesign,
)
from .gp import RewardTable, observe
from .graphs import AggregatedGraph, GraphDomain, aggregate_domain
from .ioutil import dumps_json, write_csv
from .linalg import chol_solve_lower, chol_with_jitter
from .network import NetworkParams, TrainConfig, batch_forward, gnn_forward, gradient_features, init_params, train_gnn
from .rng import derive_seed, keyed_rng

_VAR_CLAMP = -1e-10

MODELS = ("gnn", "nn")
ALGORITHMS = ("gnn-pe", "nn-pe", "gnn-ucb", "nn-ucb")


@dataclass(frozen=True)
class ConfidenceConfig:
    """Constants of the confidence sets and elimination rule."""

    rkhs_bound: float = 1.0
    noise_sigma: float = 1e-2
    regularizer: float = 1e-2
    delta: float = 0.05
    domain_size: int = 0
    beta_override: float | None = None
    use_diagonal_approx: bool = False
    elimination_slack: float = 0.0

    def __post_init__(self):
        if self.rkhs_bound <= 0 or self.regularizer <= 0:
            raise ValueError("need rkhs_bound > 0 and regularizer > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.noise_sigma < 0 or self.elimination_slack < 0:
            raise ValueError("noise and slack must be nonnegative")


@dataclass(frozen=True)
class PracticalFlags:
    """Deviations of the deployed protocol from the episodic pseudo-code.

    Unit-length episodes, training on the full history, random exploration
    for the first ``warmup_steps``, recomputing the plausible set from the
    whole domain before ``elimination_start`` and only intersecting
    afterwards, and retraining from scratch every step up to
    ``retrain_scratch_until`` then every ``retrain_every`` steps.
    """

    warmup_steps: int = 40
    elimination_start: int = 80
    retrain_scratch_until: int = 100
    retrain_every: int = 20

    def __post_init__(self):
        if min(self.warmup_steps, self.elimination_start) < 0:
            raise ValueError("step thresholds must be nonnegative")
        if self.retrain_scratch_until < 0 or self.retrain_every < 1:
            raise ValueError("bad retraining schedule")
        if self.warmup_steps > self.elimination_start:
            raise ValueError("warmup must end before intersection-based elimination starts")


def beta(cfg: ConfidenceConfig, t: int = 0) -> float:
    """Confidence width multiplier; constant in t.

    sqrt(2)*B + (sigma/sqrt(lam)) * sqrt(2*log(2*|G|/delta)), unless a fixed
    override is configured (experiments tune beta as a constant).
    """
    if cfg.beta_override is not None:
        return float(cfg.beta_override)
    if cfg.domain_size < 1:
        raise ValueError("domain_size must be set to evaluate the beta formula")
    noise_term = 0.0
    if cfg.noise_sigma > 0:
        log_term = np.log(2.0 * cfg.domain_size / cfg.delta)
        noise_term = cfg.noise_sigma / np.sqrt(cfg.regularizer) * np.sqrt(2.0 * log_term)
    return float(np.sqrt(2.0) * cfg.rkhs_bound + noise_term)


def sigma_hat(phi_query: np.ndarray, phi_history, lam: float, t: int | None = None,
              diagonal: bool = False) -> float:
    """Posterior width at one query feature vector.

    ``phi_history`` is a (k, p) array of visited feature rows (or None);
    ``t`` is the averaging divisor of the design matrix and defaults to the
    history length.  ``t`` = 0 gives the closed form ||phi||^2 / lam.
    """
    phi = np.asarray(phi_query, dtype=np.float64)
    hist = None if phi_history is None else np.asarray(phi_history, dtype=np.float64)
    k = 0 if hist is None else hist.shape[0]
    t = k if t is None else int(t)
    self_k = float(phi @ phi)
    if k == 0 or t == 0:
        return float(np.sqrt(self_k / lam))
    if diagonal:
        design = lam + np.sum(hist * hist, axis=0) / t
        var = float((phi * phi) @ (1.0 / design))
    else:
        gram = hist @ hist.T
        kvec = hist @ phi
        try:
            factor, _ = chol_with_jitter(gram + t * lam * np.eye(k))
        except CholeskyFailure as exc:
            raise SingularDesign(str(exc)) from exc
        var = (self_k - float(kvec @ chol_solve_lower(factor, kvec))) / lam
    if var < _VAR_CLAMP:
        raise NumericalFailure(f"sigma_hat variance below clamp: {var}")
    return float(np.sqrt(max(var, 0.0)))


def mu_hat(ga: AggregatedGraph, trained_params: NetworkParams) -> float:
    """Confidence-set center: the trained network's (zero-at-init) output."""
    return gnn_forward(ga, trained_params)


class ConfidenceState:
    """Incremental sigma_hat over a fixed domain.

    Tangent features at initialization are cached once per run: the full
    feature Gram for the exact dual mode, elementwise squared features for
    the diagonal mode.
    """

    def __init__(self, aggs, params: NetworkParams, lam: float, diagonal: bool = False):
        feats = gradient_features(aggs, params)
        self.gram = feats @ feats.T
        self.sq = feats * feats if diagonal else None
        self.lam = float(lam)
        self.diagonal = bool(diagonal)
        self.history: list[int] = []
        self._sq_sum = np.zeros(feats.shape[1]) if diagonal else None

    @property
    def t(self) -> int:
        return len(self.history)

    def add(self, index: int) -> None:
        self.history.append(int(index))
        if self.diagonal:
            self._sq_sum += self.sq[index]

    def reset(self) -> None:
        self.history.clear()
        if self.diagonal:
            self._sq_sum = np.zeros_like(self._sq_sum)

    def sigma_all(self, candidates=None) -> np.ndarray:
        """sigma_hat for every candidate domain index (default: all)."""
        n = self.gram.shape[0]
        cand = np.arange(n) if candidates is None else np.asarray(candidates, dtype=np.intp)
        diag = self.gram[cand, cand]
        t = self.t
        if t == 0:
            var = diag / self.lam
        elif self.diagonal:
            design = self.lam + self._sq_sum / t
            var = self.sq[cand] @ (1.0 / design)
        else:
            hist = np.asarray(self.history, dtype=np.intp)
            sub = self.gram[np.ix_(hist, hist)]
            try:
                factor, _ = chol_with_jitter(sub + t * self.lam * np.eye(t))
            except CholeskyFailure as exc:
                raise SingularDesign(str(exc)) from exc
            kvec = self.gram[np.ix_(hist, cand)]
            sol = chol_solve_lower(factor, kvec)
            var = (diag - np.einsum("tc,tc->c", kvec, sol)) / self.lam
        if np.min(var, initial=0.0) < _VAR_CLAMP:
            raise NumericalFailure(f"sigma variance below clamp: {var.min()}")
        return np.sqrt(np.maximum(var, 0.0))


@dataclass
class PeState:
    """Episode bookkeeping for phased elimination."""

    episode: int = 1
    episode_length: int = 1
    plausible: np.ndarray = None  # type: ignore[assignment]
    history: list = field(default_factory=list)


def pe_step(plausible: np.ndarray, sigma_values: np.ndarray) -> int:
    """Max-variance exploration: the plausible index with largest sigma.

    Ties break toward the lowest domain index (plausible sets are kept
    sorted).
    """
    plausible = np.asarray(plausible, dtype=np.intp)
    if plausible.size == 0:
        raise EmptyPlausibleSet("no plausible maximizers left")
    if plausible.shape != np.asarray(sigma_values).shape:
        raise DimensionMismatch("sigma values must align with the plausible set")
    return int(plausible[int(np.argmax(sigma_values))])


def pe_eliminate(plausible: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
                 beta_value: float, epsilon: float = 0.0) -> np.ndarray:
    """Keep candidates whose UCB + 2*epsilon reaches the best LCB.

    The LCB maximizer always survives its own test, so the result is
    nonempty.
    """
    plausible = np.asarray(plausible, dtype=np.intp)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if plausible.size == 0:
        raise EmptyPlausibleSet("no plausible maximizers left")
    threshold = np.max(mu - beta_value * sigma)
    keep = mu + beta_value * sigma + 2.0 * epsilon >= threshold
    return plausible[keep]


@dataclass
class RunRecord:
    """Per-step trace of one bandit run plus summary fields."""

    algorithm: str
    seed: int
    chosen: np.ndarray
    rewards: np.ndarray
    mu_chosen: np.ndarray
    sigma_chosen: np.ndarray
    beta_values: np.ndarray
    recommended: np.ndarray
    mu_max: np.ndarray
    cum_regret: np.ndarray
    inf_regret: np.ndarray
    inf_regret_literal: np.ndarray
    final_recommendation: int
    config: dict
    wall_clock: float = 0.0

    @property
    def num_steps(self) -> int:
        return self.chosen.shape[0]


def regret_metrics(record: RunRecord, reward: RewardTable):
    """Cumulative regret and inference regret traces.

    Inference regret charges the true value of the current best-guess graph
    (argmax of mu_hat); the record separately carries the literal variant
    that subtracts the predicted maximum itself.
    """
    best = reward.best_value
    inst = best - reward.values[record.chosen]
    inst_inf = best - reward.values[record.recommended]
    return np.cumsum(inst), np.cumsum(inst_inf)


def model_inputs(domain: GraphDomain, model: str) -> list:
    """Network/kernel inputs per graph: aggregated rows, or their unit concat."""
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    aggs = aggregate_domain(domain)
    if model == "gnn":
        return aggs
    n_eff = {a.num_nodes for a in aggs}
    if len(n_eff) != 1:
        raise DimensionMismatch("nn model needs a homogeneous effective node count")
    scale = 1.0 / np.sqrt(n_eff.pop())
    return [AggregatedGraph((a.hbar.ravel() * scale)[None, :]) for a in aggs]


class _RunTrace:
    """Accumulates per-step data and assembles the RunRecord."""

    def __init__(self, algorithm, seed, config):
        self.algorithm = algorithm
        self.seed = seed
        self.config = config
        self.rows = []
        self.start = time.perf_counter()

    def log(self, chosen, y, mu_c, sig_c, beta_value, recommended, mu_max):
        self.rows.append((chosen, y, mu_c, sig_c, beta_value, recommended, mu_max))

    def finish(self, reward: RewardTable, final_recommendation: int) -> RunRecord:
        cols = list(zip(*self.rows))
        record = RunRecord(
            algorithm=self.algorithm,
            seed=self.seed,
            chosen=np.asarray(cols[0], dtype=np.intp),
            rewards=np.asarray(cols[1]),
            mu_chosen=np.asarray(cols[2]),
            sigma_chosen=np.asarray(cols[3]),
            beta_values=np.asarray(cols[4]),
            recommended=np.asarray(cols[5], dtype=np.intp),
            mu_max=np.asarray(cols[6]),
            cum_regret=np.empty(0),
            inf_regret=np.empty(0),
            inf_regret_literal=np.empty(0),
            final_recommendation=final_recommendation,
            config=self.config,
        )
        record.cum_regret, record.inf_regret = regret_metrics(record, reward)
        record.inf_regret_literal = np.cumsum(reward.best_value - record.mu_max)
        record.wall_clock = time.perf_counter() - self.start
        return record


def _prepare(domain, model, cfg, width, depth, seed):
    inputs = model_inputs(domain, model)
    cfg = replace(cfg, domain_size=len(domain)) if cfg.domain_size == 0 else cfg
    params0 = init_params(width, depth, inputs[0].dim, derive_seed(seed, "theta0"))
    state = ConfidenceState(inputs, params0, cfg.regularizer, cfg.use_diagonal_approx)
    return inputs, cfg, params0, state


def run_pe(domain: GraphDomain, reward: RewardTable, model: str, cfg: ConfidenceConfig,
           train_cfg: TrainConfig, horizon: int, seed: int,
           practical: PracticalFlags | None = None,
           width: int = 256, depth: int = 2) -> RunRecord:
    """Phased elimination for ``horizon`` evaluations.

    Faithful mode (``practical`` None) runs episodes of doubling length
    starting at 1; confidence bounds per episode use only that episode's
    observations, and training restarts from the frozen initialization on
    episode data alone.  With ``practical`` flags the deployed protocol is
    used instead (see PracticalFlags).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(reward) != len(domain):
        raise DimensionMismatch("reward table does not match domain")
    inputs, cfg, params0, state = _prepare(domain, model, cfg, width, depth, seed)
    algorithm = f"{model}-pe"
    trace = _RunTrace(algorithm, seed, _config_echo(cfg, train_cfg, horizon, width, depth, practical))
    beta_value = beta(cfg)
    mu_vec = np.zeros(len(domain))
    if practical is None:
        record = _run_pe_faithful(domain, reward, inputs, cfg, train_cfg, horizon, seed,
                                  params0, state, trace, beta_value, mu_vec)
    else:
        record = _run_pe_practical(domain, reward, inputs, cfg, train_cfg, horizon, seed,
                                   params0, state, trace, beta_value, mu_vec, practical)
    return record


def _run_pe_faithful(domain, reward, inputs, cfg, train_cfg, horizon, seed,
                     params0, state, trace, beta_value, mu_vec):
    pe = PeState(plausible=np.arange(len(domain)))
    steps_done = 0
    while steps_done < horizon:
        state.reset()
        pe.history = []
        for _ in range(pe.episode_length):
            if steps_done >= horizon:
                break
            sig = state.sigma_all(pe.plausible)
            chosen = pe_step(pe.plausible, sig)
            sig_chosen = float(sig[np.searchsorted(pe.plausible, chosen)])
            rec = int(np.argmax(mu_vec))
            y = observe(reward, chosen, cfg.noise_sigma, seed, steps_done)
            trace.log(chosen, y, float(mu_vec[chosen]), sig_chosen, beta_value,
                      rec, float(mu_vec[rec]))
            state.add(chosen)
            pe.history.append((chosen, y))
            steps_done += 1
        params = train_gnn([(inputs[i], y) for i, y in pe.history], params0, train_cfg)
        mu_vec = batch_forward(inputs, params)
        sig = state.sigma_all(pe.plausible)
        pe.plausible = pe_eliminate(pe.plausible, mu_vec[pe.plausible], sig,
                                    beta_value, cfg.elimination_slack)
        pe.episode_length *= 2
        pe.episode += 1
    return trace.finish(reward, int(np.argmax(mu_vec)))


def _run_pe_practical(domain, reward, inputs, cfg, train_cfg, horizon, seed,
                      params0, state, trace, beta_value, mu_vec, flags):
    n = len(domain)
    all_idx = np.arange(n)
    plausible = all_idx
    history = []
    for step in range(1, horizon + 1):
        if step <= flags.warmup_steps:
            sig = state.sigma_all(all_idx)
            chosen = int(keyed_rng(seed, "warmup", step).integers(n))
            sig_chosen = float(sig[chosen])
        elif step < flags.elimination_start:
            sig = state.sigma_all(all_idx)
            chosen = pe_step(plausible, sig[plausible])
            sig_chosen = float(sig[chosen])
        else:
            sig = state.sigma_all(plausible)
            chosen = pe_step(plausible, sig)
            sig_chosen = float(sig[np.searchsorted(plausible, chosen)])
        rec = int(np.argmax(mu_vec))
        y = observe(reward, chosen, cfg.noise_sigma, seed, step - 1)
        trace.log(chosen, y, float(mu_vec[chosen]), sig_chosen, beta_value,
                  rec, float(mu_vec[rec]))
        state.add(chosen)
        history.append((inputs[chosen], y))
        if step <= flags.retrain_scratch_until or (step - flags.retrain_scratch_until) % flags.retrain_every == 0:
            params = train_gnn(history, params0, train_cfg)
            mu_vec = batch_forward(inputs, params)
        if step < flags.elimination_start:
            sig_dom = state.sigma_all(all_idx)
            plausible = pe_eliminate(all_idx, mu_vec, sig_dom, beta_value, 0.0)
        else:
            sig_pl = state.sigma_all(plausible)
            plausible = pe_eliminate(plausible, mu_vec[plausible], sig_pl,
                                     beta_value, cfg.elimination_slack)
    return trace.finish(reward, int(np.argmax(mu_vec)))


def run_ucb(domain: GraphDomain, reward: RewardTable, model: str, cfg: ConfidenceConfig,
            train_cfg: TrainConfig, horizon: int, seed: int,
            retrain_scratch_until: int = 100, retrain_every: int = 20,
            width: int = 256, depth: int = 2) -> RunRecord:
    """Upper-confidence-bound selection with scheduled retraining.

    At each step picks argmax of mu_hat + beta * sigma_hat, retraining from
    scratch every step up to ``retrain_scratch_until`` and every
    ``retrain_every`` steps afterwards.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(reward) != len(domain):
        raise DimensionMismatch("reward table does not match domain")
    inputs, cfg, params0, state = _prepare(domain, model, cfg, width, depth, seed)
    algorithm = f"{model}-ucb"
    trace = _RunTrace(algorithm, seed, _config_echo(cfg, train_cfg, horizon, width, depth, None))
    beta_value = beta(cfg)
    mu_vec = np.zeros(len(domain))
    history = []
    for step in range(1, horizon + 1):
        sig = state.sigma_all()
        chosen = int(np.argmax(mu_vec + beta_value * sig))
        rec = int(np.argmax(mu_vec))
        y = observe(reward, chosen, cfg.noise_sigma, seed, step - 1)
        trace.log(chosen, y, float(mu_vec[chosen]), float(sig[chosen]), beta_value,
                  rec, float(mu_vec[rec]))
        state.add(chosen)
        history.append((inputs[chosen], y))
        if step <= retrain_scratch_until or (step - retrain_scratch_until) % retrain_every == 0:
            params = train_gnn(history, params0, train_cfg)
            mu_vec = batch_forward(inputs, params)
    return trace.finish(reward, int(np.argmax(mu_vec)))


def _config_echo(cfg, train_cfg, horizon, width, depth, practical):
    echo = {
        "horizon": horizon,
        "width": width,
        "depth": depth,
        "confidence": {
            "rkhs_bound": cfg.rkhs_bound,
            "noise_sigma": cfg.noise_sigma,
            "regularizer": cfg.regularizer,
            "delta": cfg.delta,
            "domain_size": cfg.domain_size,
            "beta_override": cfg.beta_override,
            "use_diagonal_approx": cfg.use_diagonal_approx,
            "elimination_slack": cfg.elimination_slack,
        },
        "train": {
            "optimizer": train_cfg.optimizer,
            "eta": train_cfg.eta,
            "lambda_reg": train_cfg.lambda_reg,
            "max_steps": train_cfg.max_steps,
            "stop_loss": train_cfg.stop_loss,
            "stop_rel_decay": train_cfg.stop_rel_decay,
        },
    }
    if practical is not None:
        echo["practical"] = {
            "warmup_steps": practical.warmup_steps,
            "elimination_start": practical.elimination_start,
            "retrain_scratch_until": practical.retrain_scratch_until,
            "retrain_every": practical.retrain_every,
        }
    return echo


# ---------------------------------------------------------------------------
# serialization

RUN_CSV_HEADER = (
    "step", "chosen", "reward", "mu", "sigma", "beta",
    "cum_regret", "inf_regret", "inf_regret_literal",
)


def record_to_csv(record: RunRecord, path) -> None:
    rows = [
        (
            step + 1,
            int(record.chosen[step]),
            float(record.rewards[step]),
            float(record.mu_chosen[step]),
            float(record.sigma_chosen[step]),
            float(record.beta_values[step]),
            float(record.cum_regret[step]),
            float(record.inf_regret[step]),
            float(record.inf_regret_literal[step]),
        )
        for step in range(record.num_steps)
    ]
    write_csv(path, RUN_CSV_HEADER, rows)


def record_summary(record: RunRecord) -> dict:
    """JSON-ready summary; timing is deliberately excluded so reruns are
    byte-identical."""
    return {
        "algorithm": record.algorithm,
        "seed": record.seed,
        "steps": record.num_steps,
        "final_recommendation": record.final_recommendation,
        "cumulative_regret": float(record.cum_regret[-1]),
        "inference_regret": float(record.inf_regret[-1]),
        "inference_regret_literal": float(record.inf_regret_literal[-1]),
        "config": record.config,
    }


def save_record_summary(record: RunRecord, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(record_summary(record)) + "\n")
