"""Per-block metrics records: line-delimited, stable field order.

Digests are hex-encoded and timestamps are integer simulated microseconds
so that re-runs of the same (config, seed) compare byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

SCHEMA_VERSION = 1


@dataclass
class BlockMetricsRecord:
    schema: int
    height: int
    block_hash: str
    empty: bool
    pools: int
    tx_count: int
    sim_time_us: int
    block_time_us: int
    consensus_rounds: int
    committee_size: int
    signatures: int
    citizen_up_p50: int
    citizen_up_p90: int
    citizen_up_p99: int
    citizen_down_p50: int
    citizen_down_p90: int
    citizen_down_p99: int
    politician_up_p50: int
    politician_up_p90: int
    politician_up_p99: int
    politician_down_p50: int
    politician_down_p90: int
    politician_down_p99: int
    evidence_count: int
    incorrect_reads: int
    incorrect_updates: int

    def to_line(self) -> str:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        return json.dumps(data, separators=(",", ":"))


def parse_line(line: str) -> BlockMetricsRecord:
    data = json.loads(line)
    return BlockMetricsRecord(**data)


def percentile(sorted_values: list[int], q: float) -> int:
    """Nearest-rank percentile over pre-sorted values (0 when empty)."""
    if not sorted_values:
        return 0
    idx = min(len(sorted_values) - 1, max(0, round(q * (len(sorted_values) - 1))))
    return sorted_values[idx]
