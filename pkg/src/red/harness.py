"""Fit -> calibrate -> RL pipeline and the file artifacts each stage writes."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, List, Optional

import numpy as np

from red.config import RunConfig, component_seed
from red.envs import ExpertDataset, encode_pair, generate_expert_dataset, make_env
from red.errors import EmptyGrid, EmptySweep, ModelNotFound, RedError
from red.estimators import fit_autoencoder, fit_exact, fit_rnd, load_scorer, save_scorer
from red.kernel import KernelSpec, fit_kernel_support, median_bandwidth
from red.nn import MlpSpec
from red.reward import RewardModel, TerminalParams, build_reward_model, viz_reward
from red.rl import (
    CURVE_COLUMNS,
    DqnConfig,
    TabularConfig,
    dqn_train,
    expert_agreement,
    tabular_q_train,
)

log = logging.getLogger("red")

FORMAT_VERSION = 1
EXPERIMENT_COLUMNS = ("estimator", "n", "seed", "final_per_step", "final_per_episode", "status")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def load_dataset(cfg: RunConfig) -> ExpertDataset:
    if cfg.dataset.path:
        return ExpertDataset.load(cfg.dataset.path)
    return generate_expert_dataset(cfg.env, cfg.dataset.n, component_seed(cfg.seed, "dataset"))


def fit_scorer(cfg: RunConfig, data: ExpertDataset):
    est = cfg.estimator
    seed = component_seed(cfg.seed, f"estimator:{est.kind}")
    X = data.joint()
    d = X.shape[1]
    if est.kind == "kernel":
        k = est.kernel
        bandwidth = median_bandwidth(X) if k.bandwidth == "median" else float(k.bandwidth)
        return fit_kernel_support(X, KernelSpec(bandwidth, k.exponent_form), k.m, k.ridge)
    if est.kind == "rnd":
        r = est.rnd
        target = MlpSpec(d, tuple(r.target_hidden), r.embed_dim, r.activation)
        predictor = MlpSpec(d, tuple(r.predictor_hidden), r.embed_dim, r.activation)
        return fit_rnd(X, target, predictor, r.steps, seed, r.lr, r.normalize)
    if est.kind == "ae":
        a = est.ae
        spec = MlpSpec(d, tuple(a.hidden), d, a.activation)
        return fit_autoencoder(X, spec, a.weight_decay, a.steps, seed, a.lr, a.normalize)
    return fit_exact(X)


def make_reward(cfg: RunConfig, scorer, data: ExpertDataset) -> RewardModel:
    rc = cfg.reward
    terminal = TerminalParams(rc.sigma2, rc.sigma3) if rc.terminal else None
    return build_reward_model(scorer, data, rc.target_reward, rc.quantile, terminal, rc.alpha1)


def loss_stats(losses: np.ndarray) -> dict:
    return {
        "losses": [float(v) for v in losses],
        "quantiles": {
            "min": float(np.min(losses)),
            "q50": float(np.quantile(losses, 0.5)),
            "q90": float(np.quantile(losses, 0.9)),
            "max": float(np.max(losses)),
        },
        "mean": float(np.mean(losses)),
    }


def cmd_fit(cfg: RunConfig, out: Optional[str] = None) -> dict:
    """Fit the scorer; write scorer.json, stats.json, reward.json and dataset.csv."""
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    data = load_dataset(cfg)
    scorer = fit_scorer(cfg, data)
    reward = make_reward(cfg, scorer, data)
    scorer_path = os.path.join(out, "scorer.json")
    save_scorer(scorer, scorer_path)
    reward.scorer_path = scorer_path
    reward.save(os.path.join(out, "reward.json"))
    data.save(os.path.join(out, "dataset.csv"))
    stats = loss_stats(scorer.score_batch(data.joint()))
    stats.update(kind=scorer.kind, descriptor=scorer.descriptor, sigma1=reward.sigma1,
                 mean_expert_reward=reward.mean_expert_reward, n=data.n)
    _write_json(os.path.join(out, "stats.json"), stats)
    log.info("fitted %s on %d pairs, sigma1=%.6g", scorer.descriptor, data.n, reward.sigma1)
    return stats


def _score_rows(cfg: RunConfig, env_actions, state_dim: int) -> List[tuple]:
    """(state tuple, action index) rows requested by the score grid."""
    g = cfg.score_grid
    if g.pairs is not None:
        rows = []
        for p in g.pairs:
            *state, a = p
            if len(state) != state_dim or a not in env_actions:
                raise EmptyGrid(f"bad grid pair {p!r}")
            rows.append((tuple(float(v) for v in state), env_actions.index(a)))
    elif cfg.env == "simple":
        rows = [((float(s),), i) for s in np.linspace(g.low, g.high, g.points) for i in range(len(env_actions))]
    else:
        from red.envs import GRID_SIZE

        rows = [((float(x), float(y)), i) for y in range(GRID_SIZE) for x in range(GRID_SIZE)
                for i in range(len(env_actions))]
    if not rows:
        raise EmptyGrid("score grid has no points")
    return rows


def reward_map(cfg: RunConfig, reward: RewardModel) -> tuple[list, list]:
    env = make_env(cfg.env)
    if cfg.score_grid.points < 1 and cfg.score_grid.pairs is None:
        raise EmptyGrid("score grid has no points")
    rows = _score_rows(cfg, env.actions, env.state_dim)
    X = np.array([encode_pair(s, a, len(env.actions)) for s, a in rows])
    scores = reward.scorer.score_batch(X)
    rewards = reward.reward_batch(X)
    viz = viz_reward(reward.alpha1, scores)
    state_cols = ["s"] if env.state_dim == 1 else [f"s_{i}" for i in range(env.state_dim)]
    header = state_cols + ["a", "score", "reward", "viz_reward"]
    body = [(*s, env.actions[a], sc, r, v) for (s, a), sc, r, v in zip(rows, scores, rewards, viz)]
    return header, body


def cmd_score(cfg: RunConfig, out: Optional[str] = None) -> str:
    out = out or cfg.out
    reward_path = os.path.join(out, "reward.json")
    scorer_path = os.path.join(out, "scorer.json")
    if not (os.path.exists(reward_path) and os.path.exists(scorer_path)):
        raise ModelNotFound(f"no fitted model in {out}; run `red fit` first")
    reward = RewardModel.load(reward_path, scorer=load_scorer(scorer_path))
    header, body = reward_map(cfg, reward)
    path = os.path.join(out, "reward_map.csv")
    write_csv(path, header, body)
    return path


def dqn_config(cfg: RunConfig) -> DqnConfig:
    d = cfg.rl.dqn
    return DqnConfig(**{**d.__dict__, "hidden_dims": tuple(d.hidden_dims),
                        "seed": component_seed(cfg.seed, "rl")})


def tabular_config(cfg: RunConfig) -> TabularConfig:
    return TabularConfig(**{**cfg.rl.tabular.__dict__, "seed": component_seed(cfg.seed, "rl")})


def run_rl(cfg: RunConfig, reward):
    """Dispatch to DQN (simple domain) or tabular Q-learning (grid)."""
    factory = lambda seed: make_env(cfg.env, seed)  # noqa: E731
    if cfg.env == "simple":
        return dqn_train(factory, reward, dqn_config(cfg))
    return tabular_q_train(factory, reward, tabular_config(cfg))


def cmd_train(cfg: RunConfig, out: Optional[str] = None) -> dict:
    """Full pipeline; writes run_record.json, curve.csv and policy.json."""
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    stats = cmd_fit(cfg, out)
    scorer = load_scorer(os.path.join(out, "scorer.json"))
    reward = RewardModel.load(os.path.join(out, "reward.json"), scorer=scorer)
    policy, curve = run_rl(cfg, reward)
    write_csv(os.path.join(out, "curve.csv"), CURVE_COLUMNS, (row.as_tuple() for row in curve))
    _write_json(os.path.join(out, "policy.json"), policy.to_dict())
    if cfg.score_grid.pairs is not None or cfg.score_grid.points > 0:
        header, body = reward_map(cfg, reward)
        write_csv(os.path.join(out, "reward_map.csv"), header, body)
    record = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "scorer": {k: stats[k] for k in ("kind", "descriptor", "quantiles", "mean", "n")},
        "sigma1": reward.sigma1,
        "mean_expert_reward": reward.mean_expert_reward,
        "curve": [dict(zip(CURVE_COLUMNS, row.as_tuple())) for row in curve],
        "final": dict(zip(CURVE_COLUMNS, curve[-1].as_tuple())) if curve else None,
    }
    if cfg.env == "grid":
        record["expert_agreement"] = expert_agreement(policy, load_dataset(cfg))
    record["wall_clock_s"] = time.perf_counter() - t0
    _write_json(os.path.join(out, "run_record.json"), record)
    return record


def _run_cell(args) -> tuple:
    cfg_dict, out, estimator, n, seed_index = args
    from red.config import RunConfig, from_dict

    cfg = from_dict(RunConfig, cfg_dict)
    cell_dir = os.path.join(out, "cells", f"{estimator}_n{n}_s{seed_index}")
    try:
        record = cmd_train(cfg, cell_dir)
        final = record["final"] or {}
        return (estimator, n, seed_index, final.get("true_reward_per_step", float("nan")),
                final.get("true_reward_per_episode", float("nan")), "ok")
    except RedError as exc:
        log.warning("cell %s failed: %s", cell_dir, exc)
        return (estimator, n, seed_index, float("nan"), float("nan"), f"error:{exc.kind}")
    except Exception as exc:  # record the cell, keep the sweep going
        log.warning("cell %s crashed: %r", cell_dir, exc)
        return (estimator, n, seed_index, float("nan"), float("nan"), "error:RuntimeFailure")


def sweep_cells(cfg: RunConfig, out: str) -> list:
    sw = cfg.sweep
    if not sw.estimators or not sw.sizes or sw.seeds < 1:
        raise EmptySweep("sweep needs estimators, sizes and a positive seed count")
    cells = []
    for est in sw.estimators:
        for n in sw.sizes:
            for i in range(sw.seeds):
                cell_cfg = cfg.replace(estimator={"kind": est}, dataset={"n": n, "path": None},
                                       seed=component_seed(cfg.seed, f"sweep-seed-{i}"))
                cells.append((cell_cfg.to_dict(), out, est, n, i))
    return cells


def cmd_experiment(cfg: RunConfig, out: Optional[str] = None, jobs: int = 1) -> tuple[list, bool]:
    """Run the estimator x size x seed cross product; returns (rows, all_ok)."""
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    cells = sweep_cells(cfg, out)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    write_csv(os.path.join(out, "experiment.csv"), EXPERIMENT_COLUMNS, rows)
    summary = []
    for est in cfg.sweep.estimators:
        for n in cfg.sweep.sizes:
            ok = [r for r in rows if r[0] == est and r[1] == n and r[5] == "ok"]
            ps = np.array([r[3] for r in ok])
            pe = np.array([r[4] for r in ok])
            summary.append((est, n, len(ok),
                            float(ps.mean()) if ok else float("nan"), float(ps.std()) if ok else float("nan"),
                            float(pe.mean()) if ok else float("nan"), float(pe.std()) if ok else float("nan")))
    write_csv(os.path.join(out, "summary.csv"),
              ("estimator", "n", "ok_runs", "mean_per_step", "std_per_step", "mean_per_episode", "std_per_episode"),
              summary)
    return rows, all(r[5] == "ok" for r in rows)
