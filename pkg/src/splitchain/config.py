"""Scenario configuration: parsing, validation, and derived thresholds.

Configs are flat key-value text with sections (diffable, comment-friendly).
Validation runs the bound calculator: a scenario whose committee cannot
guarantee gap >= 1, or whose commit threshold falls outside the safe
window, is rejected before any simulation starts.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .bounds import (
    CommitteeBounds,
    PopulationParams,
    committee_bounds,
    committee_bounds_exact,
)
from .commit import RoundParams, derive_round_params
from .errors import ConfigError, InfeasibleConfig

POLITICIAN_STRATEGIES = (
    "staleness", "split_view", "drop", "equivocate",
    "withhold_commitments", "gossip_sinkhole", "bribe_immune",
)
CITIZEN_STRATEGIES = (
    "malicious_proposer", "bba_vote_manipulation", "rival_commit",
    "abstain", "bribe_immune",
)


@dataclass(frozen=True)
class SimConfig:
    # population
    citizens: int = 1600
    politicians: int = 40
    corrupt_citizen_frac: float = 0.0
    corrupt_politician_frac: float = 0.0
    alpha: float = 0.75          # assumed honest-citizen lower bound
    gamma: float = 0.8           # assumed corrupt-politician upper bound
    kappa: int = 3
    bounds_method: str = "exact"  # exact tails (desk scale) or chernoff
    # committee
    committee_mean: int = 200
    sortition_bits: int = 3
    proposer_bits: int = 3
    fanout: int = 25
    cooloff: int = 40
    # protocol
    rho: int = 10
    delta: int = 0               # 0 = derive from bounds
    t_star: int = 0              # 0 = derive from bounds
    rw_allowance: int = 0        # 0 = derive from bounds
    reupload_first: int = 5
    reupload_second: int = 10
    pool_cap: int = 50
    blocks: int = 50
    seed: int = 1
    # merkle
    depth: int = 14
    theta: int = 10
    hash_len: int = 10
    # read
    read_mu: float = 0.05
    read_tau: int = 40
    read_buckets: int = 40
    # write
    write_frontier_level: int = 6
    write_checks: int = 8
    write_tau: int = 12
    # network
    citizen_rate: int = 1_000_000
    politician_rate: int = 40_000_000
    latency_min_ms: int = 20
    latency_max_ms: int = 120
    # gossip
    gossip_k: int = 5
    gossip_timeout: int = 3
    gossip_quota: int = 2
    pool_size_bytes: int = 200_000
    # workload
    tx_rate: int = 120
    accounts: int = 200
    new_identities_per_block: int = 0
    # adversary
    politician_strategies: tuple[str, ...] = ()
    citizen_strategies: tuple[str, ...] = ()
    stale_lag: int = 1
    split_extra: int = 5
    gs_corrupt_keys: int = 5

    def validate(self) -> tuple[CommitteeBounds, RoundParams]:
        if not 0 <= self.corrupt_citizen_frac <= 1:
            raise ConfigError("population.corrupt_citizen_frac outside [0, 1]")
        if not 0 <= self.corrupt_politician_frac <= 1:
            raise ConfigError("population.corrupt_politician_frac outside [0, 1]")
        if self.corrupt_citizen_frac > 1 - self.alpha:
            raise ConfigError(
                "population.corrupt_citizen_frac exceeds the assumed bound 1-alpha")
        if self.corrupt_politician_frac > self.gamma:
            raise ConfigError(
                "population.corrupt_politician_frac exceeds the assumed bound gamma")
        if self.citizens != self.committee_mean * (1 << self.sortition_bits):
            raise ConfigError(
                "population.citizens must equal committee.committee_mean * "
                "2**committee.sortition_bits")
        if self.rho > self.politicians:
            raise ConfigError("protocol.rho exceeds population.politicians")
        if self.fanout > self.politicians:
            raise ConfigError("committee.fanout exceeds population.politicians")
        if not 0 <= self.write_frontier_level <= self.depth:
            raise ConfigError("write.frontier_level outside [0, depth]")
        for s in self.politician_strategies:
            if s not in POLITICIAN_STRATEGIES:
                raise ConfigError(f"adversary.politician_strategies: unknown {s!r}")
        for s in self.citizen_strategies:
            if s not in CITIZEN_STRATEGIES:
                raise ConfigError(f"adversary.citizen_strategies: unknown {s!r}")
        if self.bounds_method not in ("exact", "chernoff"):
            raise ConfigError("population.bounds_method must be exact or chernoff")
        try:
            pop = PopulationParams(
                citizens=self.citizens, alpha=self.alpha, gamma=self.gamma,
                fanout=self.fanout, mean_committee=float(self.committee_mean),
                kappa=self.kappa, politicians=self.politicians)
            if self.bounds_method == "exact":
                bounds = committee_bounds_exact(pop)
            else:
                bounds = committee_bounds(pop)
            round_params = derive_round_params(
                bounds, self.rho,
                reupload_first=self.reupload_first,
                reupload_second=self.reupload_second,
                rw_allowance=self.rw_allowance or None,
                delta=self.delta or None,
                t_star=self.t_star or None,
                proposer_bits=self.proposer_bits)
        except InfeasibleConfig as exc:
            raise ConfigError(f"infeasible scenario: {exc}") from exc
        return bounds, round_params


_SECTIONS = {
    "population": ("citizens", "politicians", "corrupt_citizen_frac",
                   "corrupt_politician_frac", "alpha", "gamma", "kappa",
                   "bounds_method"),
    "committee": ("committee_mean", "sortition_bits", "proposer_bits",
                  "fanout", "cooloff"),
    "protocol": ("rho", "delta", "t_star", "rw_allowance", "reupload_first",
                 "reupload_second", "pool_cap", "blocks", "seed"),
    "merkle": ("depth", "theta", "hash_len"),
    "read": ("read_mu", "read_tau", "read_buckets"),
    "write": ("write_frontier_level", "write_checks", "write_tau"),
    "network": ("citizen_rate", "politician_rate", "latency_min_ms",
                "latency_max_ms"),
    "gossip": ("gossip_k", "gossip_timeout", "gossip_quota", "pool_size_bytes"),
    "workload": ("tx_rate", "accounts", "new_identities_per_block"),
    "adversary": ("politician_strategies", "citizen_strategies", "stale_lag",
                  "split_extra", "gs_corrupt_keys"),
}

_FIELD_SECTION = {name: section for section, names in _SECTIONS.items()
                  for name in names}


def _parse_value(field_type, section, key, raw):
    raw = raw.strip()
    try:
        if field_type is int:
            return int(raw)
        if field_type is float:
            return float(raw)
        if field_type is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        if field_type is tuple or "tuple" in str(field_type):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return raw


def parse_config(text: str, overrides: Optional[dict[str, str]] = None
                 ) -> SimConfig:
    """Parse config text; unknown sections/keys and bad values raise
    ConfigError naming the offending field."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    types = {f.name: f.type for f in fields(SimConfig)}
    typemap = {"int": int, "float": float, "str": str,
               "tuple[str, ...]": tuple}
    values: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            name = _resolve_field(section, key)
            if name is None:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            ftype = typemap.get(str(types[name]), str)
            values[name] = _parse_value(ftype, section, key, raw)
    cfg = SimConfig(**values)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _resolve_field(section: str, key: str) -> Optional[str]:
    key = key.strip().lower()
    if key in _SECTIONS.get(section, ()):
        return key
    # short names inside read/write sections (mu, tau, ...)
    prefixed = f"{section}_{key}"
    if prefixed in _SECTIONS.get(section, ()):
        return prefixed
    return None


def apply_overrides(cfg: SimConfig, overrides: dict[str, str]) -> SimConfig:
    """Apply flat name=value overrides (CLI flags, env vars)."""
    types = {f.name: f.type for f in fields(SimConfig)}
    typemap = {"int": int, "float": float, "str": str,
               "tuple[str, ...]": tuple}
    updates = {}
    for name, raw in overrides.items():
        name = name.lower()
        if name not in types:
            raise ConfigError(f"unknown config field {name!r}")
        section = _FIELD_SECTION.get(name, "")
        ftype = typemap.get(str(types[name]), str)
        updates[name] = _parse_value(ftype, section, name, str(raw))
    return replace(cfg, **updates)


def load_config(path: str, overrides: Optional[dict[str, str]] = None
                ) -> SimConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)


def dump_config(cfg: SimConfig) -> str:
    """Serialize a config with stable section/field order."""
    out = io.StringIO()
    for section, names in _SECTIONS.items():
        out.write(f"[{section}]\n")
        for name in names:
            value = getattr(cfg, name)
            if isinstance(value, tuple):
                value = ",".join(value)
            out.write(f"{name} = {value}\n")
        out.write("\n")
    return out.getvalue()
