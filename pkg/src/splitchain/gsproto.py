"""Sampling-based global-state read and update against untrusted servers.

A citizen reads key values from one politician of its safe sample, then
pins them down with (a) random challenge-path spot-checks and (b) bucket
digests cross-checked by the rest of the sample, correcting disputed keys
with proofs.  Updates go the other way: politicians compute the updated
tree and the citizen verifies a frontier-level decomposition of it.

Wire sizes follow the fixed-width record model: a challenge path is
``depth * hash_len`` sibling bytes plus ``theta * 8`` bytes of leaf payload
(colocated slots are padded to theta), keys and values are 4 bytes.  All
transfer and hash accounting for the efficiency comparisons comes from the
session meter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

from . import crypto
from .smt import (
    ChallengePath,
    FrontierSlice,
    HashCounter,
    PathVerifier,
    SparseMerkleTree,
    DeltaMerkleTree,
    UpdateProofBundle,
    leaf_index,
    root_from_frontier,
    subtree_update_proof,
    verify_update_proof,
)

KEY_BYTES = 4
VALUE_BYTES = 4

# Documented naive-baseline costs at the reference scale (300k keys in a
# depth-30 tree, 10-byte node hashes): downloading every challenge path is
# 300000 * (30 * 10 + 60) bytes, and verifying paths for both read and
# update costs 300000 * 30 * 2 hash evaluations.
NAIVE_BASELINE_BYTES = 108_000_000
NAIVE_BASELINE_HASHES = 18_000_000


@dataclass(frozen=True)
class ReadParams:
    """Spot-check fraction, correctable-key cap, and bucket count.

    At reference parameters mu*tau = 7.5 > 7, giving epsilon1 <= 2^-10;
    scaled-down scenarios may run weaker on purpose.
    """

    mu: float = 0.015
    tau: int = 500
    buckets: int = 2000

    @property
    def epsilon1(self) -> float:
        return math.exp(-self.mu * self.tau)


@dataclass(frozen=True)
class WriteParams:
    frontier_level: int = 13
    checks: int = 72
    tau: int = 800

    @property
    def epsilon2(self) -> float:
        return (1 - self.tau / (1 << self.frontier_level)) ** self.checks


def path_record_bytes(depth: int, theta: int, hash_len: int) -> int:
    return depth * hash_len + theta * 8


def bundle_record_bytes(bundle: UpdateProofBundle, depth: int, level: int,
                        theta: int, hash_len: int) -> int:
    """Wire size of one frontier proof bundle.

    Per changed leaf: the new-tree path below the frontier with its leaf
    payload, plus the old-tree path to the root with its leaf payload.  An
    unchanged node ships its digest and its path to the root.
    """
    if not bundle.entries:
        return (len(bundle.node_siblings or ()) + 1) * hash_len
    per_key = ((depth - level) * hash_len + theta * 8) + \
        (depth * hash_len + theta * 8)
    return per_key * len(bundle.entries)


class SessionMeter:
    """Per-step upload/download byte counts plus a hash counter."""

    def __init__(self) -> None:
        self.up: dict[str, int] = {}
        self.down: dict[str, int] = {}
        self.hashes = HashCounter()

    def charge(self, step: str, up: int = 0, down: int = 0) -> None:
        if up:
            self.up[step] = self.up.get(step, 0) + up
        if down:
            self.down[step] = self.down.get(step, 0) + down

    @property
    def total_up(self) -> int:
        return sum(self.up.values())

    @property
    def total_down(self) -> int:
        return sum(self.down.values())

    def total_for(self, step: str) -> int:
        return self.up.get(step, 0) + self.down.get(step, 0)


class EvidenceKind(enum.Enum):
    BAD_SPOT_PATH = "bad_spot_path"
    BAD_CORRECTION_PATH = "bad_correction_path"
    BOGUS_EXCEPTION = "bogus_exception"
    BAD_FRONTIER = "bad_frontier"
    BAD_BUNDLE = "bad_bundle"


@dataclass
class Evidence:
    """Self-contained proof that a politician served bad data.

    ``payload`` is the served object; a third party replays the same check
    against the signed root to validate the claim.
    """

    kind: EvidenceKind
    politician: int
    payload: object
    context: dict = field(default_factory=dict)


class ReadProvider(Protocol):
    def get_values(self, keys: Sequence[bytes]) -> list[Optional[bytes]]: ...

    def get_paths(self, keys: Sequence[bytes]) -> list[ChallengePath]: ...

    def exception_list(self, bucket_digests: Sequence[bytes]) -> list[int]: ...

    def bucket_values(self, indices: Sequence[int]
                      ) -> dict[int, list[tuple[bytes, Optional[bytes]]]]: ...


class UpdateProvider(Protocol):
    def get_frontier(self) -> FrontierSlice: ...

    def get_bundles(self, indices: Sequence[int]) -> dict[int, UpdateProofBundle]: ...


def sort_keys_for_buckets(keys: Sequence[bytes]) -> list[bytes]:
    return sorted(keys, key=lambda k: crypto.hash_bytes(k))


def bucket_slices(n_keys: int, buckets: int) -> list[tuple[int, int]]:
    if n_keys == 0:
        return []
    chunk = math.ceil(n_keys / buckets)
    return [(i, min(i + chunk, n_keys)) for i in range(0, n_keys, chunk)]


def bucketize(keys: Sequence[bytes], values: Mapping[bytes, Optional[bytes]],
              buckets: int, hash_len: int,
              counter: Optional[HashCounter] = None) -> list[bytes]:
    """Deterministic bucket digests over (key, value) pairs.

    Keys are ranked by their hash bytes and chunked into at most ``buckets``
    contiguous groups, so the citizen and every politician derive identical
    digests from identical data.
    """
    return bucketize_ordered(sort_keys_for_buckets(keys), values, buckets,
                             hash_len, counter)


def bucketize_ordered(ordered: Sequence[bytes],
                      values: Mapping[bytes, Optional[bytes]],
                      buckets: int, hash_len: int,
                      counter: Optional[HashCounter] = None) -> list[bytes]:
    digests = []
    for lo, hi in bucket_slices(len(ordered), buckets):
        parts = []
        for k in ordered[lo:hi]:
            v = values.get(k)
            parts.append(k)
            parts.append(b"\xff" if v is None else b"\x01" + v)
        if counter is not None:
            counter.add()
        digests.append(crypto.truncated_hash(b"bucket" + b"".join(parts), hash_len))
    return digests


@dataclass
class ReadResult:
    ok: bool
    values: dict[bytes, Optional[bytes]]
    source: Optional[int]
    corrected: int
    evidence: list[Evidence]
    discarded: list[int]
    meter: SessionMeter
    reason: str = ""


def gs_read(rng, keys: Sequence[bytes], sample: Sequence[int],
            providers: Mapping[int, ReadProvider], gs_root: bytes,
            params: ReadParams, depth: int, theta: int, hash_len: int,
            meter: Optional[SessionMeter] = None,
            verifier: Optional[PathVerifier] = None,
            ordered_keys: Optional[list[bytes]] = None) -> ReadResult:
    """Read ``keys`` from a safe sample with spot-checks and exception lists.

    For a good citizen (>= 1 honest provider in the sample) the returned
    values are all correct unless the source corrupted more than ``tau``
    values and every spot-check missed, which happens with probability at
    most exp(-mu * tau).  A shared ``verifier`` (anchored at the same root)
    may be passed to pool verified-path work across sessions.
    """
    meter = meter if meter is not None else SessionMeter()
    keys = list(keys)
    k = len(keys)
    evidence: list[Evidence] = []
    discarded: list[int] = []
    prec = path_record_bytes(depth, theta, hash_len)
    if verifier is None:
        verifier = PathVerifier(gs_root, depth, hash_len, meter.hashes)
    elif verifier.root != gs_root:
        raise ValueError("shared verifier anchored at a different root")

    for source_pos, source in enumerate(sample):
        values = dict(zip(keys, providers[source].get_values(keys)))
        meter.charge("read_values", down=k * VALUE_BYTES)

        # Spot-check a random key subset with full challenge paths.
        k_spot = min(k, round(params.mu * k))
        spot_keys = rng.sample(keys, k_spot) if k_spot else []
        meter.charge("read_spotcheck", up=k_spot * KEY_BYTES)
        paths = providers[source].get_paths(spot_keys)
        meter.charge("read_spotcheck", down=k_spot * prec)
        source_ok = len(paths) == len(spot_keys)
        if source_ok:
            for key, path in zip(spot_keys, paths):
                if path.key != key or not verifier.verify(path) or \
                        path.value != values[key]:
                    evidence.append(Evidence(EvidenceKind.BAD_SPOT_PATH, source,
                                             path, {"key": key}))
                    source_ok = False
                    break
        if not source_ok:
            discarded.append(source)
            continue

        # Cross-check bucket digests with the whole sample.
        ordered = ordered_keys if ordered_keys is not None \
            else sort_keys_for_buckets(keys)
        digests = bucketize_ordered(ordered, values, params.buckets, hash_len,
                                    meter.hashes)
        slices = bucket_slices(k, params.buckets)
        meter.charge("read_buckets", up=len(digests) * hash_len * len(sample))
        chunk = slices[0][1] - slices[0][0] if slices else 0

        corrections = 0
        exhausted = False
        for peer in sample:
            if peer == source or peer in discarded:
                continue
            elist = sorted(providers[peer].exception_list(digests))
            meter.charge("read_exceptions", down=len(elist) * 4)
            if len(elist) > params.tau:
                # Longer than the correctable budget: discarded wholesale.
                discarded.append(peer)
                continue
            if not elist:
                continue
            claimed = providers[peer].bucket_values(elist)
            meter.charge("read_bucket_values",
                         down=len(elist) * chunk * VALUE_BYTES)
            peer_ok = True
            for bidx in elist:
                if exhausted or not peer_ok:
                    break
                if bidx >= len(slices):
                    evidence.append(Evidence(EvidenceKind.BOGUS_EXCEPTION, peer,
                                             elist, {"bucket": bidx}))
                    discarded.append(peer)
                    peer_ok = False
                    break
                lo, hi = slices[bidx]
                claimed_pairs = dict(claimed.get(bidx, []))
                for key in ordered[lo:hi]:
                    if corrections >= params.tau:
                        exhausted = True
                        break
                    claim = claimed_pairs.get(key)
                    if claim == values[key]:
                        continue
                    [path] = providers[peer].get_paths([key])
                    meter.charge("read_corrections", down=prec)
                    if path.key != key or not verifier.verify(path):
                        evidence.append(Evidence(
                            EvidenceKind.BAD_CORRECTION_PATH, peer, path,
                            {"key": key}))
                        discarded.append(peer)
                        peer_ok = False
                        break
                    if path.value != values[key]:
                        values[key] = path.value
                        corrections += 1
                    if path.value != claim:
                        # The dispute itself was false even though the
                        # proof was sound.
                        evidence.append(Evidence(
                            EvidenceKind.BOGUS_EXCEPTION, peer, elist,
                            {"key": key, "claim": claim}))
                        discarded.append(peer)
                        peer_ok = False
                        break
        return ReadResult(ok=True, values=values, source=source,
                          corrected=corrections, evidence=evidence,
                          discarded=discarded, meter=meter)

    return ReadResult(ok=False, values={}, source=None, corrected=0,
                      evidence=evidence, discarded=discarded, meter=meter,
                      reason="all_sources_discarded")


@dataclass
class UpdateResult:
    ok: bool
    new_root: Optional[bytes]
    source: Optional[int]
    corrected: int
    evidence: list[Evidence]
    discarded: list[int]
    meter: SessionMeter
    reason: str = ""


def gs_update(rng, updates: Mapping[bytes, bytes], sample: Sequence[int],
              providers: Mapping[int, UpdateProvider], old_root: bytes,
              params: WriteParams, depth: int, theta: int, hash_len: int,
              meter: Optional[SessionMeter] = None,
              verifier: Optional[PathVerifier] = None,
              bundle_cache: Optional[dict] = None) -> UpdateResult:
    """Learn the updated tree root from politician-computed trees.

    The citizen downloads the frontier row from one provider, spot-checks
    ``checks`` random frontier nodes via update-proof bundles anchored at
    the old signed root, cross-checks the frontier vector against the rest
    of the sample, and corrects up to ``tau`` disputed nodes with further
    bundles; finally it hashes the frontier row up into the new root.
    """
    meter = meter if meter is not None else SessionMeter()
    level = params.frontier_level
    width = 1 << level
    evidence: list[Evidence] = []
    discarded: list[int] = []
    shared_verifier = verifier
    if shared_verifier is not None and shared_verifier.root != old_root:
        raise ValueError("shared verifier anchored at a different root")
    changed_by_leaf: dict[int, dict[bytes, bytes]] = {}
    for key, value in updates.items():
        changed_by_leaf.setdefault(leaf_index(key, depth), {})[key] = value

    def check_bundle(pid: int, f: int, bundle: UpdateProofBundle,
                     verifier: PathVerifier) -> Optional[bytes]:
        meter.charge("write_bundles",
                     down=bundle_record_bytes(bundle, depth, level, theta, hash_len))
        if bundle.frontier_index != f:
            return None
        if bundle_cache is not None:
            hit = bundle_cache.get(id(bundle))
            if hit is not None:
                return hit[1] if hit[0] else None
        ok, digest = verify_update_proof(bundle, verifier, changed_by_leaf,
                                         level, meter.hashes)
        if bundle_cache is not None:
            bundle_cache[id(bundle)] = (ok, digest)
        return digest if ok else None

    for source in sample:
        frontier = list(providers[source].get_frontier().nodes)
        meter.charge("write_frontier", down=width * hash_len)
        if len(frontier) != width:
            discarded.append(source)
            continue
        verifier = shared_verifier if shared_verifier is not None else \
            PathVerifier(old_root, depth, hash_len, meter.hashes)
        spot = sorted(rng.sample(range(width), min(params.checks, width)))
        meter.charge("write_spotcheck", up=max(width >> 3, 1))
        bundles = providers[source].get_bundles(spot)
        source_ok = True
        for f in spot:
            digest = check_bundle(source, f, bundles.get(f), verifier) \
                if bundles.get(f) is not None else None
            if digest is None or digest != frontier[f]:
                evidence.append(Evidence(EvidenceKind.BAD_BUNDLE, source,
                                         bundles.get(f), {"frontier": f}))
                source_ok = False
                break
        if not source_ok:
            discarded.append(source)
            continue

        # Cross-check the frontier vector against the rest of the sample;
        # exception lists are derived citizen-side from the vectors.
        disputes: list[tuple[int, int]] = []
        for peer in sample:
            if peer == source or peer in discarded:
                continue
            peer_front = list(providers[peer].get_frontier().nodes)
            meter.charge("write_frontier_cross", down=width * hash_len)
            if len(peer_front) != width:
                discarded.append(peer)
                continue
            elist = [i for i in range(width) if peer_front[i] != frontier[i]]
            if len(elist) > params.tau:
                discarded.append(peer)
                continue
            disputes.extend((peer, i) for i in elist)

        corrections = 0
        budget = params.tau + len(sample)
        processed = 0
        bad_peers: set[int] = set()
        source_blamed = False
        for peer, f in disputes:
            if processed >= budget:
                break
            if peer in bad_peers:
                continue
            processed += 1
            bundle = providers[peer].get_bundles([f]).get(f)
            digest = None if bundle is None else check_bundle(peer, f, bundle,
                                                              verifier)
            if digest is None:
                evidence.append(Evidence(EvidenceKind.BAD_BUNDLE, peer, bundle,
                                         {"frontier": f}))
                discarded.append(peer)
                bad_peers.add(peer)
                continue
            if digest != frontier[f]:
                # A verified correction pins the truth: the source served a
                # wrong digest for this node, which is blacklist evidence.
                if not source_blamed:
                    evidence.append(Evidence(EvidenceKind.BAD_FRONTIER, source,
                                             frontier[f], {"frontier": f}))
                    source_blamed = True
                frontier[f] = digest
                corrections += 1

        new_root = root_from_frontier(
            FrontierSlice(level, tuple(frontier)), hash_len, meter.hashes)
        return UpdateResult(ok=True, new_root=new_root, source=source,
                            corrected=corrections, evidence=evidence,
                            discarded=discarded, meter=meter)

    return UpdateResult(ok=False, new_root=None, source=None, corrected=0,
                        evidence=evidence, discarded=discarded, meter=meter,
                        reason="all_sources_discarded")


# -- reference (honest) providers ------------------------------------------


class TreeReadProvider:
    """Serves read queries straight from a committed tree.

    Paths and bucket digests are cached; one provider instance typically
    serves a whole committee round.
    """

    def __init__(self, tree: SparseMerkleTree, keys: Sequence[bytes],
                 params: ReadParams):
        self.tree = tree
        self.keys = list(keys)
        self.params = params
        self._digests: Optional[list[bytes]] = None
        self._paths: dict[bytes, ChallengePath] = {}

    def get_values(self, keys: Sequence[bytes]) -> list[Optional[bytes]]:
        return [self.tree.get(k) for k in keys]

    def _path(self, key: bytes) -> ChallengePath:
        path = self._paths.get(key)
        if path is None:
            path = self.tree.get_with_proof(key)[1]
            self._paths[key] = path
        return path

    def get_paths(self, keys: Sequence[bytes]) -> list[ChallengePath]:
        return [self._path(k) for k in keys]

    def _own_digests(self) -> list[bytes]:
        if self._digests is None:
            values = {k: self.tree.get(k) for k in self.keys}
            self._digests = bucketize(self.keys, values, self.params.buckets,
                                      self.tree.hash_len)
        return self._digests

    def exception_list(self, bucket_digests: Sequence[bytes]) -> list[int]:
        own = self._own_digests()
        return [i for i, d in enumerate(bucket_digests)
                if i < len(own) and d != own[i]]

    def bucket_values(self, indices: Sequence[int]
                      ) -> dict[int, list[tuple[bytes, Optional[bytes]]]]:
        ordered = sort_keys_for_buckets(self.keys)
        slices = bucket_slices(len(ordered), self.params.buckets)
        out = {}
        for i in indices:
            if i < len(slices):
                lo, hi = slices[i]
                out[i] = [(k, self.tree.get(k)) for k in ordered[lo:hi]]
        return out


class TreeUpdateProvider:
    """Serves the updated-tree frontier and proof bundles honestly.

    The frontier slice and per-node bundles are cached across queries, so
    one provider can serve every member of a round.
    """

    def __init__(self, base: SparseMerkleTree, delta: DeltaMerkleTree,
                 level: int):
        self.base = base
        self.delta = delta
        self.level = level
        self._frontier: Optional[FrontierSlice] = None
        self._bundles: dict[int, UpdateProofBundle] = {}

    def get_frontier(self) -> FrontierSlice:
        if self._frontier is None:
            self._frontier = self.delta.frontier(self.level)
        return self._frontier

    def get_bundles(self, indices: Sequence[int]) -> dict[int, UpdateProofBundle]:
        out = {}
        for f in indices:
            bundle = self._bundles.get(f)
            if bundle is None:
                bundle = subtree_update_proof(self.base, self.delta, f, self.level)
                self._bundles[f] = bundle
            out[f] = bundle
        return out


def communication_cost_report(meter: SessionMeter) -> dict[str, dict[str, int]]:
    """Per-step byte counts, totals, and the verification-overhead figure
    used by the efficiency comparison (the bulk value download is excluded:
    the naive baseline's path transfer subsumes it on both sides)."""
    steps = sorted(set(meter.up) | set(meter.down))
    report = {s: {"up": meter.up.get(s, 0), "down": meter.down.get(s, 0)}
              for s in steps}
    overhead = sum(meter.total_for(s) for s in steps if s != "read_values")
    report["totals"] = {
        "up": meter.total_up,
        "down": meter.total_down,
        "overhead_bytes": overhead,
        "hashes": meter.hashes.count,
    }
    return report
