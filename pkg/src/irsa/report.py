"""Artifact writers: delimited output plus rendered figures.

Every CSV starts with a single comment line carrying the resolved run
configuration as JSON, so an artifact can be replayed byte-for-byte by
feeding that line back as a config file.  Values are printed at six
significant digits.  When a figure is requested it lands next to the
CSV with the same stem and a .png suffix.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .mac_sim import SimStats


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def config_header(config: dict) -> str:
    return "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":"))


def read_config_header(path) -> dict:
    """Recover the run configuration embedded in an artifact."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    prefix = "# config: "
    if not first.startswith(prefix):
        raise ValueError(f"{path} carries no config header")
    return json.loads(first[len(prefix):])


def _write_csv(path, config: dict, columns: list[str], rows) -> None:
    lines = [config_header(config), ",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_simstats_csv(path, stats: SimStats, config: dict) -> None:
    _write_csv(
        path,
        config,
        ["K_a", "trials", "plr", "ci_lo", "ci_hi", "seed"],
        [(r.k_a, r.trials, r.plr, r.ci_lo, r.ci_hi, r.seed) for r in stats.rows],
    )


def write_curve_csv(path, points, config: dict) -> None:
    _write_csv(path, config, ["G", "Q_limit"], points)


def write_table_csv(path, columns: list[str], rows, config: dict) -> None:
    _write_csv(path, config, columns, rows)


def write_json(path, payload: dict, config: dict) -> None:
    document = {"config": config, **payload}
    Path(path).write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def figure_path(out_path) -> Path:
    return Path(out_path).with_suffix(".png")


def render_plr_figure(path, stats: SimStats, thresholds=None, title: str = "") -> None:
    """Packet loss versus active users, with optional threshold markers."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    xs = [r.k_a for r in stats.rows]
    ys = [max(r.plr, 1e-12) for r in stats.rows]
    ax.semilogy(xs, ys, marker="o", lw=1.2, label="simulation")
    for label, k_star in thresholds or []:
        ax.axvline(k_star, ls="--", lw=1.0, color="gray")
        ax.annotate(
            label,
            xy=(k_star, 0.6),
            xycoords=("data", "axes fraction"),
            rotation=90,
            fontsize=8,
            ha="right",
        )
    ax.set_xlabel("active users per frame")
    ax.set_ylabel("packet loss rate")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_curve_figure(path, points, title: str = "") -> None:
    """Limiting packet loss versus offered load."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    xs = [g for g, _ in points]
    ys = [max(q, 1e-12) for _, q in points]
    ax.semilogy(xs, ys, marker=".", lw=1.2)
    ax.set_xlabel("load G (users per slot)")
    ax.set_ylabel("limiting packet loss")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_history_figure(path, history, title: str = "") -> None:
    """Best threshold per optimizer generation."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(range(len(history)), history, marker=".", lw=1.2)
    ax.set_xlabel("generation")
    ax.set_ylabel("best threshold")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_table2_figure(path, rows, title: str = "") -> None:
    """Threshold and per-antenna efficiency versus antenna count."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    antennas = [r[0] for r in rows]
    ax.plot(antennas, [r[1] for r in rows], marker="o", label="threshold")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("antennas")
    ax.set_ylabel("threshold G*")
    twin = ax.twinx()
    twin.plot(antennas, [r[2] for r in rows], marker="s", color="C1", label="G*/M")
    twin.set_ylabel("G* per antenna")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
