"""Report rendering: figures plus a delimited summary from metrics files.

Consumes one or more line-delimited metrics files (one simulation run
each) and writes, into the output directory:

* ``summary.tsv``      -- one row per run (throughput, empties, pools, bytes)
* ``timeline.png``     -- cumulative committed transactions vs simulated time
* ``pools.png``        -- committed pools per block
* ``block_times.png``  -- per-block commit latency in simulated seconds
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import BlockMetricsRecord, parse_line


def load_metrics(path: str) -> list[BlockMetricsRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(parse_line(line))
    if not records:
        raise ValueError(f"{path}: no metrics records")
    return records


def _summary_row(label: str, records: list[BlockMetricsRecord]) -> dict:
    total_tx = sum(r.tx_count for r in records)
    sim_s = records[-1].sim_time_us / 1e6
    empties = sum(1 for r in records if r.empty)
    return {
        "label": label,
        "blocks": len(records),
        "txs": total_tx,
        "tx_per_sim_s": round(total_tx / sim_s, 2) if sim_s else 0.0,
        "empty_fraction": round(empties / len(records), 4),
        "mean_pools": round(sum(r.pools for r in records) / len(records), 3),
        "mean_consensus_rounds": round(
            sum(r.consensus_rounds for r in records) / len(records), 3),
        "citizen_up_p99": max(r.citizen_up_p99 for r in records),
        "politician_up_p99": max(r.politician_up_p99 for r in records),
    }


def render_report(metric_paths: list[str], out_dir: str,
                  labels: list[str] | None = None) -> list[str]:
    if labels and len(labels) != len(metric_paths):
        raise ValueError("one --label per metrics file, please")
    labels = labels or [os.path.splitext(os.path.basename(p))[0]
                        for p in metric_paths]
    runs = [(label, load_metrics(path))
            for label, path in zip(labels, metric_paths)]
    os.makedirs(out_dir, exist_ok=True)
    written = []

    summary_path = os.path.join(out_dir, "summary.tsv")
    rows = [_summary_row(label, records) for label, records in runs]
    cols = list(rows[0])
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for row in rows:
            fh.write("\t".join(str(row[c]) for c in cols) + "\n")
    written.append(summary_path)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label, records in runs:
        xs = [r.sim_time_us / 1e6 for r in records]
        ys = []
        total = 0
        for r in records:
            total += r.tx_count
            ys.append(total)
        ax.plot(xs, ys, marker="o", markersize=2.5, linewidth=1.2, label=label)
    ax.set_xlabel("simulated time (s)")
    ax.set_ylabel("committed transactions")
    ax.set_title("Block commit timeline")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "timeline.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label, records in runs:
        ax.plot([r.height for r in records], [r.pools for r in records],
                linewidth=1.0, label=label)
    ax.set_xlabel("height")
    ax.set_ylabel("committed pools")
    ax.set_title("Pools per block")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "pools.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for label, records in runs:
        ax.plot([r.height for r in records],
                [r.block_time_us / 1e6 for r in records],
                linewidth=1.0, label=label)
    ax.set_xlabel("height")
    ax.set_ylabel("block time (simulated s)")
    ax.set_title("Per-block commit latency")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "block_times.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    return written
