"""Summaries and dependency-free SVG plots of finished runs."""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict
from typing import Dict, List, Sequence, Tuple

import numpy as np

from red.errors import ConfigError, NoRuns

log = logging.getLogger("red")

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, PAD = 640, 400, 50


def find_records(run_dir: str) -> List[str]:
    paths = []
    for root, dirs, files in os.walk(run_dir):
        dirs.sort()
        if "run_record.json" in files:
            paths.append(os.path.join(root, "run_record.json"))
    return sorted(paths)


def _axes(xmin, xmax, ymin, ymax):
    if xmax == xmin:
        xmax = xmin + 1
    if ymax == ymin:
        ymax = ymin + 1

    def px(x):
        return PAD + (x - xmin) / (xmax - xmin) * (W - 2 * PAD)

    def py(y):
        return H - PAD - (y - ymin) / (ymax - ymin) * (H - 2 * PAD)

    return px, py


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> List[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{ylabel}</text>',
        f'<text x="{PAD}" y="{H - PAD + 15}" font-size="10">{xr[0]:.4g}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 15}" text-anchor="end" font-size="10">{xr[1]:.4g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end" font-size="10">{yr[0]:.3g}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end" font-size="10">{yr[1]:.3g}</text>',
    ]


def _points(xs, ys, px, py) -> str:
    return " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))


def curves_svg(groups: Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]) -> str:
    """One polyline per group (mean over seeds) with a shaded +-std band."""
    all_x = np.concatenate([g[0] for g in groups.values()])
    lo = min(float(np.min(m - s)) for _, m, s in groups.values())
    hi = max(float(np.max(m + s)) for _, m, s in groups.values())
    px, py = _axes(all_x.min(), all_x.max(), lo, hi)
    out = _frame("True per-step reward during training", "env step", "true reward per step",
                 (all_x.min(), all_x.max()), (lo, hi))
    for k, (name, (x, mean, std)) in enumerate(sorted(groups.items())):
        color = _COLORS[k % len(_COLORS)]
        if np.any(std > 0):
            band = _points(x, mean + std, px, py) + " " + _points(x[::-1], (mean - std)[::-1], px, py)
            out.append(f'<polygon class="band" points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline class="curve" points="{_points(x, mean, px, py)}" fill="none" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - PAD + 2}" y="{PAD + 14 * k}" font-size="11" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def reward_map_svg(rows: Sequence[dict], title: str = "Estimated reward") -> str:
    """Reward against s, one curve per action."""
    by_action = defaultdict(list)
    for r in rows:
        by_action[r["a"]].append((float(r["s"]), float(r["reward"])))
    xs = [s for pts in by_action.values() for s, _ in pts]
    px, py = _axes(min(xs), max(xs), 0.0, 1.0)
    out = _frame(title, "s", "reward", (min(xs), max(xs)), (0.0, 1.0))
    for k, (a, pts) in enumerate(sorted(by_action.items())):
        pts.sort()
        color = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline class="curve" points="{_points(*zip(*pts), px, py)}" fill="none" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - PAD + 2}" y="{PAD + 14 * k}" font-size="11" fill="{color}">a={a}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def moving_average(y: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` evaluation points (window 1 = raw)."""
    if window < 1:
        raise ValueError("smoothing window must be >= 1")
    c = np.cumsum(np.insert(np.asarray(y, dtype=np.float64), 0, 0.0))
    idx = np.arange(1, len(y) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _curve_label(record: dict) -> str:
    cfg = record["config"]
    return f'{cfg["estimator"]["kind"]} n={cfg["dataset"]["n"]}'


def cmd_report(run_dir: str, smooth: int = 1) -> Tuple[List[str], List[str]]:
    """Print a summary table and write learning_curves.svg / reward_map.svg.

    Curves are raw evaluation points unless ``smooth`` > 1, which applies a
    trailing moving average to each seed's curve before averaging.
    Returns ``(summary lines, written svg paths)``.
    """
    if smooth < 1:
        raise ConfigError("smooth must be >= 1")
    paths = find_records(run_dir)
    records, lines = [], []
    for p in paths:
        try:
            with open(p) as fh:
                rec = json.load(fh)
            rec["_dir"] = os.path.dirname(p)
            _curve_label(rec)
            records.append(rec)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("skipping %s: %s", p, exc)
            lines.append(f"WARNING skipped {p}: {type(exc).__name__}")
    if not records:
        raise NoRuns(f"no valid run records under {run_dir}")

    groups: Dict[str, list] = defaultdict(list)
    for rec in records:
        groups[_curve_label(rec)].append(rec)

    header = f'{"run":<24} {"runs":>4} {"final/step":>11} {"std":>8} {"sigma1":>10}'
    lines.insert(0, header)
    curves = {}
    for label, recs in sorted(groups.items()):
        finals = [r["final"]["true_reward_per_step"] for r in recs if r.get("final")]
        sig = np.mean([r["sigma1"] for r in recs])
        mean = np.mean(finals) if finals else float("nan")
        std = np.std(finals) if finals else float("nan")
        lines.append(f"{label:<24} {len(recs):>4} {mean:>11.4f} {std:>8.4f} {sig:>10.4g}")
        rows = [r["curve"] for r in recs if r.get("curve")]
        if rows:
            length = min(len(c) for c in rows)
            x = np.array([c["env_step"] for c in rows[0][:length]], dtype=float)
            y = np.array([moving_average([c["true_reward_per_step"] for c in curve[:length]], smooth)
                          for curve in rows])
            curves[label] = (x, y.mean(axis=0), y.std(axis=0))

    written = []
    if curves:
        path = os.path.join(run_dir, "learning_curves.svg")
        with open(path, "w") as fh:
            fh.write(curves_svg(curves))
        written.append(path)
    map_path = next((os.path.join(r["_dir"], "reward_map.csv") for r in records
                     if os.path.exists(os.path.join(r["_dir"], "reward_map.csv"))), None)
    if map_path:
        with open(map_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and "s" in rows[0]:
            path = os.path.join(run_dir, "reward_map.svg")
            with open(path, "w") as fh:
                fh.write(reward_map_svg(rows))
            written.append(path)
    return lines, written
