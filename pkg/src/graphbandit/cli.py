"""Command-line front-end.

Subcommands::

    gen-domain     write a synthetic random-graph domain as JSON
    sample-reward  draw a benchmark reward table for a domain
    run            execute a bandit algorithm; per-repeat CSV + summary JSON
    mig            greedy information-gain curves per kernel
    kernel         Gram matrix export with diagnostics

Flag precedence: command-line flags override --config file values override
built-in defaults.  Exit codes: 2 bad flags or validation, 3 I/O failure,
4 Cholesky failure, 5 training divergence.  GRAPHBANDIT_THREADS caps
parallelism; outputs are byte-identical regardless of its value.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bandit import (
    ALGORITHMS,
    ConfidenceConfig,
    PracticalFlags,
    record_to_csv,
    run_pe,
    run_ucb,
    save_record_summary,
)
from .errors import CholeskyFailure, GraphBanditError, NonFiniteLoss
from .gp import greedy_mig_curve, load_reward, sample_reward, save_reward
from .graphs import (
    Permutation,
    aggregate,
    aggregate_domain,
    gen_erdos_renyi,
    load_domain,
    permute,
    save_domain,
)
from .ioutil import write_csv
from .kernels import (
    BRUTE_FORCE_MAX_NODES,
    gntk,
    kbar_bruteforce,
    kernel_matrix,
    kernel_matrix_to_csv,
)
from .network import TrainConfig
from .parallel import parallel_map
from .plot import save_svg, svg_regret_chart
from .rng import derive_seed


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config-file values > defaults."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise _IoError(f"cannot read config file: {exc}")
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key in merged:
                merged[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


class _IoError(Exception):
    pass


def _load_domain(path):
    try:
        return load_domain(path)
    except OSError as exc:
        raise _IoError(f"cannot read domain file: {exc}")


def _load_reward(path):
    try:
        return load_reward(path)
    except OSError as exc:
        raise _IoError(f"cannot read reward file: {exc}")


# ---------------------------------------------------------------------------
# gen-domain

_GEN_DEFAULTS = {
    "count": 100,
    "nodes": 20,
    "edge_prob": 0.2,
    "dim": 10,
    "seed": 0,
    "out": None,
}


def cmd_gen_domain(args) -> int:
    opt = _merge_options(args, _GEN_DEFAULTS)
    if opt["out"] is None:
        raise ValueError("--out is required")
    domain = gen_erdos_renyi(
        count=int(opt["count"]),
        n_nodes=int(opt["nodes"]),
        p=float(opt["edge_prob"]),
        d=int(opt["dim"]),
        seed=int(opt["seed"]),
    )
    try:
        save_domain(domain, opt["out"])
    except OSError as exc:
        raise _IoError(f"cannot write domain file: {exc}")
    mean_edges = float(np.mean([g.num_edges for g in domain.graphs]))
    print(
        f"domain: count={len(domain)} N={domain.num_nodes} p={domain.edge_prob:g} "
        f"d={domain.dim} mean_edges={mean_edges:.6g} -> {opt['out']}"
    )
    return 0


# ---------------------------------------------------------------------------
# sample-reward

_REWARD_DEFAULTS = {
    "domain": None,
    "kernel": "gntk",
    "depth": 2,
    "anchors": 5,
    "seed": 0,
    "reg_lambda": 1e-4,
    "out": None,
}


def cmd_sample_reward(args) -> int:
    opt = _merge_options(args, _REWARD_DEFAULTS)
    if opt["domain"] is None or opt["out"] is None:
        raise ValueError("--domain and --out are required")
    domain = _load_domain(opt["domain"])
    table = sample_reward(
        domain,
        tag=opt["kernel"],
        depth=int(opt["depth"]),
        anchors=int(opt["anchors"]),
        seed=int(opt["seed"]),
        lam=float(opt["reg_lambda"]),
    )
    try:
        save_reward(table, opt["out"])
    except OSError as exc:
        raise _IoError(f"cannot write reward file: {exc}")
    print(f"reward: argmax={table.argmax} value={table.best_value:.10g} -> {opt['out']}")
    return 0


# ---------------------------------------------------------------------------
# run

_RUN_DEFAULTS = {
    "domain": None,
    "reward": None,
    "algorithm": None,
    "horizon": 300,
    "repeats": 1,
    "seed": 0,
    "width": 256,
    "depth": 2,
    "noise_sigma": 1e-2,
    "reg_lambda": 1e-2,
    "rkhs_bound": 1.0,
    "delta": 0.05,
    "beta_override": None,
    "diagonal": True,
    "elimination_slack": 0.0,
    "practical": True,
    "warmup_steps": 40,
    "elimination_start": 80,
    "retrain_scratch_until": 100,
    "retrain_every": 20,
    "optimizer": "adam",
    "eta": 1e-3,
    "train_lambda": 0.0,
    "max_steps": 100,
    "stop_loss": 1e-4,
    "stop_rel_decay": 1e-3,
    "out_dir": None,
    "svg": None,
}


def _run_one(task):
    domain, reward, algorithm, cfg, train_cfg, horizon, seed, practical, width, depth = task
    model, family = algorithm.rsplit("-", 1)
    if family == "pe":
        return run_pe(domain, reward, model, cfg, train_cfg, horizon, seed,
                      practical=practical, width=width, depth=depth)
    return run_ucb(
        domain, reward, model, cfg, train_cfg, horizon, seed,
        retrain_scratch_until=practical.retrain_scratch_until if practical else 100,
        retrain_every=practical.retrain_every if practical else 20,
        width=width, depth=depth,
    )


def cmd_run(args) -> int:
    opt = _merge_options(args, _RUN_DEFAULTS)
    for key in ("domain", "reward", "algorithm", "out_dir"):
        if opt[key] is None:
            raise ValueError(f"--{key.replace('_', '-')} is required")
    if opt["algorithm"] not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    repeats = int(opt["repeats"])
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    domain = _load_domain(opt["domain"])
    reward = _load_reward(opt["reward"])
    cfg = ConfidenceConfig(
        rkhs_bound=float(opt["rkhs_bound"]),
        noise_sigma=float(opt["noise_sigma"]),
        regularizer=float(opt["reg_lambda"]),
        delta=float(opt["delta"]),
        domain_size=len(domain),
        beta_override=None if opt["beta_override"] is None else float(opt["beta_override"]),
        use_diagonal_approx=bool(opt["diagonal"]),
        elimination_slack=float(opt["elimination_slack"]),
    )
    train_cfg = TrainConfig(
        optimizer=opt["optimizer"],
        eta=float(opt["eta"]),
        lambda_reg=float(opt["train_lambda"]),
        max_steps=int(opt["max_steps"]),
        stop_loss=float(opt["stop_loss"]),
        stop_rel_decay=None if opt["stop_rel_decay"] in (None, "none") else float(opt["stop_rel_decay"]),
    )
    practical = None
    if bool(opt["practical"]):
        practical = PracticalFlags(
            warmup_steps=int(opt["warmup_steps"]),
            elimination_start=int(opt["elimination_start"]),
            retrain_scratch_until=int(opt["retrain_scratch_until"]),
            retrain_every=int(opt["retrain_every"]),
        )
    horizon = int(opt["horizon"])
    out_dir = Path(opt["out_dir"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _IoError(f"cannot create output directory: {exc}")

    master_seed = int(opt["seed"])
    seeds = [derive_seed(master_seed, "repeat", r) for r in range(repeats)]
    tasks = [
        (domain, reward, opt["algorithm"], cfg, train_cfg, horizon, s, practical,
         int(opt["width"]), int(opt["depth"]))
        for s in seeds
    ]
    records = parallel_map(_run_one, tasks)

    base = opt["algorithm"]
    for r, record in enumerate(records):
        record_to_csv(record, out_dir / f"{base}_rep{r:02d}.csv")
        save_record_summary(record, out_dir / f"{base}_rep{r:02d}.json")
        print(
            f"run: {base} repeat={r} seed={record.seed} "
            f"R_T={record.cum_regret[-1]:.6g} R_hat_T={record.inf_regret[-1]:.6g} "
            f"recommendation={record.final_recommendation}"
        )

    cum = np.stack([rec.cum_regret for rec in records])
    inf = np.stack([rec.inf_regret for rec in records])

    def _stderr(mat):
        if mat.shape[0] < 2:
            return np.zeros(mat.shape[1])
        return mat.std(axis=0, ddof=1) / np.sqrt(mat.shape[0])

    steps = np.arange(1, horizon + 1)
    rows = zip(steps, cum.mean(axis=0), _stderr(cum), inf.mean(axis=0), _stderr(inf))
    agg_path = out_dir / f"{base}_aggregate.csv"
    write_csv(
        agg_path,
        ("step", "cum_regret_mean", "cum_regret_stderr", "inf_regret_mean", "inf_regret_stderr"),
        rows,
    )
    print(f"run: aggregate of {repeats} repeats -> {agg_path}")
    if opt["svg"]:
        chart = svg_regret_chart(
            f"{base}: inference regret (mean over {repeats} repeats)",
            "step",
            "inference regret",
            [(base, steps, inf.mean(axis=0), _stderr(inf))],
        )
        save_svg(chart, opt["svg"])
        print(f"run: chart -> {opt['svg']}")
    return 0


# ---------------------------------------------------------------------------
# mig

_MIG_DEFAULTS = {
    "domain": None,
    "horizon": 200,
    "depth": 2,
    "reg_lambda": 1e-2,
    "kernels": "gntk,ntk-vanilla",
    "out": None,
}


def cmd_mig(args) -> int:
    opt = _merge_options(args, _MIG_DEFAULTS)
    if opt["domain"] is None or opt["out"] is None:
        raise ValueError("--domain and --out are required")
    domain = _load_domain(opt["domain"])
    horizon = int(opt["horizon"])
    lam = float(opt["reg_lambda"])
    tags = [tag.strip() for tag in str(opt["kernels"]).split(",") if tag.strip()]
    curves = {tag: greedy_mig_curve(domain, tag, int(opt["depth"]), horizon, lam) for tag in tags}
    header = ["t"] + [f"gain_{tag.replace('-', '_')}" for tag in tags]
    steps = np.arange(1, horizon + 1)
    rows = zip(steps, *[curves[tag] for tag in tags])
    write_csv(opt["out"], header, rows)
    for tag in tags:
        slope = fit_loglog_slope(steps, curves[tag])
        print(f"mig: {tag} tail log-log slope = {slope:.6g}")
    print(f"mig: curves -> {opt['out']}")
    return 0


def fit_loglog_slope(steps: np.ndarray, gains: np.ndarray) -> float:
    """Least-squares slope of log(gain) vs log(t) over the tail half."""
    lo = steps.shape[0] // 2
    x = np.log(steps[lo:])
    y = np.log(np.maximum(gains[lo:], 1e-300))
    x = x - x.mean()
    return float((x @ (y - y.mean())) / (x @ x))


# ---------------------------------------------------------------------------
# kernel

_KERNEL_DEFAULTS = {
    "domain": None,
    "kernel": "gntk",
    "depth": 2,
    "out": None,
}


def cmd_kernel(args) -> int:
    opt = _merge_options(args, _KERNEL_DEFAULTS)
    if opt["domain"] is None or opt["out"] is None:
        raise ValueError("--domain and --out are required")
    domain = _load_domain(opt["domain"])
    depth = int(opt["depth"])
    tag = opt["kernel"]
    aggs = aggregate_domain(domain)
    k = kernel_matrix(aggs, tag, depth)
    kernel_matrix_to_csv(k, opt["out"])
    eigs = np.linalg.eigvalsh(np.asarray(k.entries))
    print(f"kernel: {tag} size={k.size} min_eig={eigs[0]:.6g} max_eig={eigs[-1]:.6g}")

    perm = Permutation.random(domain.num_nodes, seed=0)
    permuted0 = aggregate(permute(domain.graphs[0], perm))
    func = {"gntk": gntk}.get(tag)
    if func is not None:
        deltas = [abs(func(permuted0, aggs[j], depth) - float(k.entries[0, j]))
                  for j in range(min(len(aggs), 16))]
        print(f"kernel: permutation spot-check max|delta| = {max(deltas):.3g}")
        if domain.num_nodes <= BRUTE_FORCE_MAX_NODES:
            pairs = [(i, j) for i in range(min(3, len(aggs))) for j in range(i, min(3, len(aggs)))]
            worst = max(
                abs(kbar_bruteforce(aggs[i], aggs[j], depth) - float(k.entries[i, j]))
                for i, j in pairs
            )
            verdict = "PASS" if worst < 1e-10 else "FAIL"
            print(f"kernel: oracle max|delta| < 1e-10: {verdict} (max|delta| = {worst:.3g})")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphbandit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-domain", help="generate a synthetic graph domain")
    p.add_argument("--config")
    p.add_argument("--count", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--edge-prob", dest="edge_prob", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_domain)

    p = sub.add_parser("sample-reward", help="sample a benchmark reward table")
    p.add_argument("--config")
    p.add_argument("--domain")
    p.add_argument("--kernel", choices=("gntk", "ntk-vanilla"))
    p.add_argument("--depth", type=int)
    p.add_argument("--anchors", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample_reward)

    p = sub.add_parser("run", help="run a bandit algorithm")
    p.add_argument("--config")
    p.add_argument("--domain")
    p.add_argument("--reward")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--horizon", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--rkhs-bound", dest="rkhs_bound", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--beta", dest="beta_override", type=float)
    p.add_argument("--diagonal", action=argparse.BooleanOptionalAction)
    p.add_argument("--elimination-slack", dest="elimination_slack", type=float)
    p.add_argument("--practical", action=argparse.BooleanOptionalAction)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    p.add_argument("--elimination-start", dest="elimination_start", type=int)
    p.add_argument("--retrain-scratch-until", dest="retrain_scratch_until", type=int)
    p.add_argument("--retrain-every", dest="retrain_every", type=int)
    p.add_argument("--optimizer", choices=("plain-gd", "adam"))
    p.add_argument("--eta", type=float)
    p.add_argument("--train-lambda", dest="train_lambda", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--stop-loss", dest="stop_loss", type=float)
    p.add_argument("--stop-rel-decay", dest="stop_rel_decay")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mig", help="greedy information-gain curves")
    p.add_argument("--config")
    p.add_argument("--domain")
    p.add_argument("--horizon", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.add_argument("--kernels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mig)

    p = sub.add_parser("kernel", help="kernel matrix export with diagnostics")
    p.add_argument("--config")
    p.add_argument("--domain")
    p.add_argument("--kernel", choices=("gntk", "ntk-vanilla"))
    p.add_argument("--depth", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CholeskyFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except (ValueError, GraphBanditError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
