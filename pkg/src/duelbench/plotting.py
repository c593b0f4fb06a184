"""Regret figures rendered from summary JSON files.

Figures are pure functions of the summary: no statistics are computed here,
only drawn.  SVG output is byte-stable (fixed hash salt, no date metadata).
Each policy's mean curve is tagged ``line-<policy>`` and its 25-75% band
``band-<policy>`` in the SVG element ids.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# dashed RUCB, dotted DTS, solid Sup-KLUCB
LINESTYLES = {"sup-klucb": "-", "rucb": "--", "dts": ":", "random": "-."}
COLORS = {"sup-klucb": "#1f4e9c", "rucb": "#b2182b", "dts": "#2b8a3e", "random": "#777777"}
LABELS = {"sup-klucb": "Sup-KLUCB", "rucb": "RUCB", "dts": "DTS", "random": "Random"}

RC = {
    "svg.hashsalt": "duelbench",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


class MalformedSummary(ValueError):
    pass


def load_summary(path: Union[str, Path]) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedSummary(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict) or not data:
        raise MalformedSummary(f"{path}: expected a non-empty JSON object")
    return data


def is_sweep(summary: dict) -> bool:
    return summary.get("kind") == "sweep"


def _style(name: str, n: int) -> dict:
    return {
        "linestyle": LINESTYLES.get(name, "-"),
        "color": COLORS.get(name, f"C{n}"),
        "label": LABELS.get(name, name),
    }


def _check_curve(name: str, stats: dict) -> None:
    keys = ("rounds", "mean", "p25", "p75")
    if not isinstance(stats, dict) or any(k not in stats for k in keys):
        raise MalformedSummary(f"policy {name!r}: needs keys {keys}")
    lengths = {len(stats[k]) for k in keys}
    if len(lengths) != 1 or 0 in lengths:
        raise MalformedSummary(f"policy {name!r}: curve arrays differ in length or are empty")


def regret_figure(summary: dict, title: str = "Cumulative Copeland regret"):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for n, (name, stats) in enumerate(summary.items()):
        _check_curve(name, stats)
        style = _style(name, n)
        band = ax.fill_between(stats["rounds"], stats["p25"], stats["p75"],
                               color=style["color"], alpha=0.2, linewidth=0)
        band.set_gid(f"band-{name}")
        (line,) = ax.plot(stats["rounds"], stats["mean"], linewidth=1.6, **style)
        line.set_gid(f"line-{name}")
    ax.set_xscale("log")
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative regret")
    ax.set_title(title)
    ax.legend(loc="upper left")
    fig.tight_layout()
    return fig


def sweep_figure(summary: dict, title: str = "Final cumulative regret vs. number of arms"):
    entries = summary.get("final_regret")
    if not isinstance(entries, list) or not entries:
        raise MalformedSummary("sweep summary needs a non-empty 'final_regret' list")
    by_policy: dict[str, list[dict]] = {}
    for e in entries:
        if not {"policy", "arms", "mean", "p25", "p75"} <= set(e):
            raise MalformedSummary(f"malformed sweep entry {e!r}")
        by_policy.setdefault(e["policy"], []).append(e)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for n, (name, rows) in enumerate(by_policy.items()):
        rows = sorted(rows, key=lambda e: e["arms"])
        style = _style(name, n)
        ks = [e["arms"] for e in rows]
        band = ax.fill_between(ks, [e["p25"] for e in rows], [e["p75"] for e in rows],
                               color=style["color"], alpha=0.2, linewidth=0)
        band.set_gid(f"band-{name}")
        (line,) = ax.plot(ks, [e["mean"] for e in rows], marker="o", markersize=3,
                          linewidth=1.6, **style)
        line.set_gid(f"line-{name}")
    ax.set_xlabel("number of arms K")
    ax.set_ylabel("cumulative regret at horizon")
    ax.set_title(title)
    ax.legend(loc="upper left")
    fig.tight_layout()
    return fig


def render_summary(summary: dict, out: Union[str, Path]) -> Path:
    """Draw the figure matching ``summary`` and write it to ``out``.

    The format follows the file suffix; ``.svg`` output is deterministic.
    """
    out = Path(out)
    with plt.rc_context(RC):
        fig = sweep_figure(summary) if is_sweep(summary) else regret_figure(summary)
        try:
            fig.savefig(out, metadata=_metadata(out))
        finally:
            plt.close(fig)
    return out


def _metadata(out: Path) -> dict:
    suffix = out.suffix.lower()
    if suffix == ".svg":
        return {"Date": None, "Creator": None}
    if suffix == ".pdf":
        return {"CreationDate": None, "Creator": None, "Producer": None}
    return {}
