# Copyright (C) 2026 The kvsim Authors
# SPDX-License-Identifier: Apache-2.0
"""Plots the reports a kvsim run leaves in an output directory.

Usage: python3 plot_reports.py REPORT_DIR [--save DIR]

Each figure is drawn only when its input file exists:
  ablation.csv        attention loss and hash footprint against code length
  correlation.csv     Pearson r per stream against code length
  alr_*.csv           attention-loss ratio per stream, one bar group per ranking
  eviction_log.csv    histogram of evicted token age and cumulative lost mass
  timing.json         per-step and scoring latency
"""

import argparse
import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_ablation(rows, ax):
    dims = [int(r["dim"]) for r in rows]
    ax.plot(dims, [float(r["attention_loss"]) for r in rows], "o-", color="C0")
    ax.set_xlabel("hash bits")
    ax.set_ylabel("mean attention loss", color="C0")
    ax.set_xscale("log", base=2)
    twin = ax.twinx()
    twin.plot(dims, [int(r["hash_bytes"]) for r in rows], "s--", color="C1")
    twin.set_ylabel("hash table bytes", color="C1")
    ax.set_title("Hash dimension ablation")


def plot_correlation(rows, ax):
    by_stream = defaultdict(list)
    for r in rows:
        by_stream[(r["layer"], r["head"])].append((int(r["bits"]), float(r["r"])))
    for (layer, head), points in sorted(by_stream.items()):
        points.sort()
        ax.plot([b for b, _ in points], [r for _, r in points], "o-", alpha=0.6, label=f"L{layer}H{head}")
    ax.axhline(0.0, color="grey", linewidth=0.5)
    ax.set_xlabel("hash bits")
    ax.set_ylabel("Pearson r")
    ax.set_title("Attention vs. inverted Hamming distance")
    if len(by_stream) <= 8:
        ax.legend(fontsize="small")


def plot_alr(tables, ax):
    rankings = sorted(tables)
    streams = {(r["layer"], r["head"]) for rows in tables.values() for r in rows}
    streams = sorted(streams, key=lambda s: (int(s[0]), int(s[1])))
    width = 0.8 / len(rankings)
    for i, ranking in enumerate(rankings):
        values = {(r["layer"], r["head"]): float(r["alr"]) for r in tables[ranking]}
        xs = [j + i * width for j in range(len(streams))]
        ax.bar(xs, [values.get(s, 0.0) for s in streams], width=width, label=ranking)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(streams))])
    ax.set_xticklabels([f"L{layer}H{head}" for layer, head in streams], rotation=90, fontsize="small")
    ax.set_ylabel("attention-loss ratio")
    ax.set_title("Ranking quality (lower is better)")
    ax.legend()


def plot_evictions(rows, axes):
    ages = [int(r["step"]) - int(r["token_position_evicted"]) for r in rows]
    axes[0].hist(ages, bins=50)
    axes[0].set_xlabel("age of evicted token (steps)")
    axes[0].set_ylabel("evictions")
    axes[0].set_title("Eviction age")
    total = 0.0
    cumulative = []
    for r in rows:
        total += float(r["attention_mass_lost"])
        cumulative.append(total)
    axes[1].plot(cumulative)
    axes[1].set_xlabel("eviction index")
    axes[1].set_ylabel("cumulative mass lost at eviction")
    axes[1].set_title("Lost attention mass")


def plot_timing(doc, ax):
    for stream in doc["streams"]:
        label = f"L{stream['layer']}H{stream['head']}"
        ax.plot([ns / 1000.0 for ns in stream["step_ns"]], alpha=0.5, label=f"{label} step")
        ax.plot([ns / 1000.0 for ns in stream["scoring_ns"]], alpha=0.5, label=f"{label} scoring")
    ax.set_xlabel("step")
    ax.set_ylabel("microseconds")
    ax.set_yscale("log")
    ax.set_title(f"Latency ({doc['tokens_per_second']:.0f} tokens/s)")
    if len(doc["streams"]) <= 4:
        ax.legend(fontsize="small")


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("report_dir", type=Path)
    parser.add_argument("--save", type=Path, help="directory for the PNGs (default: REPORT_DIR)")
    args = parser.parse_args()
    out_dir = args.save or args.report_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    d = args.report_dir
    written = []

    def save(fig, name):
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    if (d / "ablation.csv").exists():
        fig, ax = plt.subplots(figsize=(6, 4))
        plot_ablation(read_csv(d / "ablation.csv"), ax)
        save(fig, "ablation.png")
    if (d / "correlation.csv").exists():
        fig, ax = plt.subplots(figsize=(6, 4))
        plot_correlation(read_csv(d / "correlation.csv"), ax)
        save(fig, "correlation.png")
    alr_tables = {p.stem[len("alr_"):]: read_csv(p) for p in sorted(d.glob("alr_*.csv"))}
    if alr_tables:
        fig, ax = plt.subplots(figsize=(7, 4))
        plot_alr(alr_tables, ax)
        save(fig, "alr.png")
    if (d / "eviction_log.csv").exists():
        rows = read_csv(d / "eviction_log.csv")
        if rows:
            fig, axes = plt.subplots(1, 2, figsize=(10, 4))
            plot_evictions(rows, axes)
            save(fig, "evictions.png")
    if (d / "timing.json").exists():
        fig, ax = plt.subplots(figsize=(7, 4))
        plot_timing(json.loads((d / "timing.json").read_text()), ax)
        save(fig, "timing.png")

    for path in written:
        print(f"wrote {path}")
    if not written:
        print(f"no report files found in {d}")


if __name__ == "__main__":
    main()
