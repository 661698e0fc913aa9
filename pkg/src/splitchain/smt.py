"""Sparse Merkle tree global state with bounded leaf collisions.

A key lives in the leaf indexed by the low ``depth`` bits of its hash; up to
``theta`` keys may share a leaf ("colocated pairs", kept sorted by key bytes
so leaf digests are canonical).  Interior digests are truncated to
``hash_len`` bytes.  Rows are counted from the root: row 0 is the root, row
``depth`` holds the leaves.

Storage: digest arrays for rows 0..DENSE_ROWS; deeper rows are almost empty
at realistic fills and are recomputed on demand from the sorted leaf index,
so a depth-30 tree with a few hundred thousand keys stays small.

A committed tree is treated as immutable; updates build a
:class:`DeltaMerkleTree` overlay whose root equals a full rebuild with the
same updates.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .errors import LeafFull

DENSE_ROWS = 18

Pair = tuple[bytes, bytes]


class HashCounter:
    """Counts hash evaluations performed by verification code."""

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n


def leaf_index(key: bytes, depth: int) -> int:
    """Leaf slot of a key: low ``depth`` bits of hash(key)."""
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest, "big") & ((1 << depth) - 1)


def combine(left: bytes, right: bytes, hash_len: int, counter: Optional[HashCounter] = None) -> bytes:
    if counter is not None:
        counter.add()
    return hashlib.sha256(b"\x01" + left + right).digest()[:hash_len]


def leaf_digest(pairs: tuple[Pair, ...], hash_len: int, counter: Optional[HashCounter] = None) -> bytes:
    if not pairs:
        return bytes(hash_len)
    if counter is not None:
        counter.add()
    parts = [b"\x00"]
    for k, v in pairs:
        parts.append(len(k).to_bytes(2, "big"))
        parts.append(k)
        parts.append(len(v).to_bytes(2, "big"))
        parts.append(v)
    return hashlib.sha256(b"".join(parts)).digest()[:hash_len]


_null_cache: dict[tuple[int, int], list[bytes]] = {}


def null_digests(depth: int, hash_len: int) -> list[bytes]:
    """null[r] = digest of an empty subtree rooted at row r."""
    key = (depth, hash_len)
    cached = _null_cache.get(key)
    if cached is None:
        nulls = [b""] * (depth + 1)
        nulls[depth] = bytes(hash_len)
        for r in range(depth - 1, -1, -1):
            nulls[r] = combine(nulls[r + 1], nulls[r + 1], hash_len)
        _null_cache[key] = nulls
        cached = nulls
    return cached


def _canonical_pairs(pairs: Iterable[Pair]) -> tuple[Pair, ...]:
    return tuple(sorted(pairs, key=lambda kv: kv[0]))


@dataclass(frozen=True)
class ChallengePath:
    """Proof of a key's value (or absence) against a tree root.

    ``siblings`` run leaf to root: siblings[j] sits at row depth-j.  The
    colocated pairs are the leaf's full content, so the verifier can
    recompute the leaf digest and check membership or absence.
    """

    key: bytes
    value: Optional[bytes]
    colocated: tuple[Pair, ...]
    siblings: tuple[bytes, ...]


@dataclass(frozen=True)
class FrontierSlice:
    """All 2**level digests of one tree row, left to right."""

    level: int
    nodes: tuple[bytes, ...]


class SparseMerkleTree:
    def __init__(self, depth: int, theta: int = 10, hash_len: int = 10):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.theta = theta
        self.hash_len = hash_len
        self.nulls = null_digests(depth, hash_len)
        self._leaves: dict[int, tuple[Pair, ...]] = {}
        self._occupied: list[int] = []
        self._dense_rows = min(depth, DENSE_ROWS)
        self._rows: list[bytearray] = [
            bytearray(self.nulls[r] * (1 << r)) for r in range(self._dense_rows + 1)
        ]

    # -- construction ---------------------------------------------------

    @classmethod
    def from_items(cls, items: Mapping[bytes, bytes] | Iterable[Pair], depth: int,
                   theta: int = 10, hash_len: int = 10) -> "SparseMerkleTree":
        """Bulk build: one bottom-up pass instead of per-key path updates."""
        tree = cls(depth, theta, hash_len)
        if isinstance(items, Mapping):
            items = items.items()
        by_leaf: dict[int, list[Pair]] = {}
        for k, v in items:
            by_leaf.setdefault(leaf_index(k, depth), []).append((k, v))
        for idx, pairs in by_leaf.items():
            if len({k for k, _ in pairs}) != len(pairs):
                raise ValueError("duplicate key")
            if len(pairs) > theta:
                raise LeafFull(f"leaf {idx} would hold {len(pairs)} > {theta} keys")
            tree._leaves[idx] = _canonical_pairs(pairs)
        tree._occupied = sorted(tree._leaves)
        tree._rebuild_dense()
        return tree

    def _rebuild_dense(self) -> None:
        hl = self.hash_len
        level: list[tuple[int, bytes]] = [
            (i, leaf_digest(self._leaves[i], hl)) for i in self._occupied
        ]
        r = self.depth
        while r > 0:
            if r <= self._dense_rows:
                row = self._rows[r]
                for i, dg in level:
                    row[i * hl:(i + 1) * hl] = dg
            nxt: list[tuple[int, bytes]] = []
            j = 0
            null_child = self.nulls[r]
            while j < len(level):
                i, dg = level[j]
                if j + 1 < len(level) and level[j + 1][0] == i ^ 1 and i % 2 == 0:
                    sib = level[j + 1][1]
                    nxt.append((i >> 1, combine(dg, sib, hl)))
                    j += 2
                else:
                    if i % 2 == 0:
                        nxt.append((i >> 1, combine(dg, null_child, hl)))
                    else:
                        nxt.append((i >> 1, combine(null_child, dg, hl)))
                    j += 1
            level = nxt
            r -= 1
        if level:
            self._rows[0][0:hl] = level[0][1]
        else:
            self._rows[0][0:hl] = self.nulls[0]

    # -- node access ----------------------------------------------------

    def node(self, row: int, idx: int) -> bytes:
        """Digest of the subtree rooted at (row, idx)."""
        if row <= self._dense_rows:
            hl = self.hash_len
            return bytes(self._rows[row][idx * hl:(idx + 1) * hl])
        return self._compute_node(row, idx)

    def _compute_node(self, row: int, idx: int) -> bytes:
        lo = idx << (self.depth - row)
        hi = (idx + 1) << (self.depth - row)
        a = bisect_left(self._occupied, lo)
        b = bisect_right(self._occupied, hi - 1)
        if a == b:
            return self.nulls[row]
        if row == self.depth:
            return leaf_digest(self._leaves[idx], self.hash_len)
        return combine(
            self._compute_node(row + 1, idx << 1),
            self._compute_node(row + 1, (idx << 1) | 1),
            self.hash_len,
        )

    @property
    def root(self) -> bytes:
        return self.node(0, 0)

    def __len__(self) -> int:
        return sum(len(p) for p in self._leaves.values())

    def items(self) -> Iterable[Pair]:
        for idx in self._occupied:
            yield from self._leaves[idx]

    def leaf_pairs(self, idx: int) -> tuple[Pair, ...]:
        return self._leaves.get(idx, ())

    # -- updates ----------------------------------------------------------

    def put(self, key: bytes, value: bytes) -> bytes:
        """Insert or update one key; returns the new root.

        Raises LeafFull when a *new* key would push its leaf past theta;
        updating an existing key never rejects.
        """
        idx = leaf_index(key, self.depth)
        pairs = self._leaves.get(idx, ())
        existing = dict(pairs)
        if key not in existing and len(pairs) >= self.theta:
            raise LeafFull(f"leaf {idx} already holds {self.theta} keys")
        existing[key] = value
        if not pairs:
            insort(self._occupied, idx)
        self._leaves[idx] = _canonical_pairs(existing.items())
        self._update_path(idx)
        return self.root

    def _update_path(self, idx: int) -> None:
        hl = self.hash_len
        for r in range(self._dense_rows, 0, -1):
            i = idx >> (self.depth - r)
            if r == self.depth:
                dg = leaf_digest(self._leaves.get(i, ()), hl)
            else:
                dg = combine(self.node(r + 1, i << 1), self.node(r + 1, (i << 1) | 1), hl)
            self._rows[r][i * hl:(i + 1) * hl] = dg
        self._rows[0][0:hl] = combine(self.node(1, 0), self.node(1, 1), hl)

    # -- proofs -----------------------------------------------------------

    def get(self, key: bytes) -> Optional[bytes]:
        idx = leaf_index(key, self.depth)
        for k, v in self._leaves.get(idx, ()):
            if k == key:
                return v
        return None

    def path_siblings(self, idx: int) -> tuple[bytes, ...]:
        """Siblings of leaf ``idx``, leaf to root."""
        sibs = []
        for r in range(self.depth, 0, -1):
            i = idx >> (self.depth - r)
            sibs.append(self.node(r, i ^ 1))
        return tuple(sibs)

    def get_with_proof(self, key: bytes) -> tuple[Optional[bytes], ChallengePath]:
        idx = leaf_index(key, self.depth)
        pairs = self._leaves.get(idx, ())
        value = dict(pairs).get(key)
        path = ChallengePath(key=key, value=value, colocated=pairs,
                             siblings=self.path_siblings(idx))
        return value, path

    def frontier(self, level: int) -> FrontierSlice:
        if not 0 <= level <= self.depth:
            raise ValueError("frontier level out of range")
        return FrontierSlice(level, tuple(self.node(level, i) for i in range(1 << level)))


class PathVerifier:
    """Verifies challenge paths against one root, sharing verified ancestors.

    Once a (row, idx, digest) triple has been chained to the root, any later
    path reaching the same node with the same digest is accepted without
    recomputing the remaining climb; reaching it with a different digest
    fails.  The hash counter therefore reflects the deduplicated work of
    batch verification.
    """

    def __init__(self, root: bytes, depth: int, hash_len: int,
                 counter: Optional[HashCounter] = None):
        self.root = root
        self.depth = depth
        self.hash_len = hash_len
        self.counter = counter
        self._memo: dict[tuple[int, int], bytes] = {(0, 0): root}

    def climb(self, row: int, idx: int, digest: bytes, siblings: tuple[bytes, ...]) -> bool:
        """Fold ``digest`` at (row, idx) up to the root using ``siblings``.

        ``siblings`` run from row ``row`` up; exactly ``row`` entries.
        """
        if len(siblings) != row:
            return False
        memo = self._memo
        r, i, dg = row, idx, digest
        pending: list[tuple[int, int, bytes]] = []
        ok = None
        for j in range(row):
            known = memo.get((r, i))
            if known is not None:
                ok = known == dg
                break
            pending.append((r, i, dg))
            sib = siblings[j]
            if i & 1:
                dg = combine(sib, dg, self.hash_len, self.counter)
            else:
                dg = combine(dg, sib, self.hash_len, self.counter)
            r -= 1
            i >>= 1
        if ok is None:
            ok = memo[(0, 0)] == dg
        if ok:
            for r, i, dg in pending:
                memo[(r, i)] = dg
        return ok

    def verify(self, path: ChallengePath) -> bool:
        """Full challenge-path check: membership claim, canonical leaf, climb."""
        if len(path.siblings) != self.depth:
            return False
        keys = [k for k, _ in path.colocated]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            return False
        claimed = dict(path.colocated).get(path.key)
        if claimed != path.value:
            return False
        idx = leaf_index(path.key, self.depth)
        dg = leaf_digest(path.colocated, self.hash_len, self.counter)
        return self.climb(self.depth, idx, dg, path.siblings)


def verify_path(root: bytes, path: ChallengePath, depth: int, hash_len: int,
                counter: Optional[HashCounter] = None) -> bool:
    """One-shot challenge-path verification against ``root``."""
    return PathVerifier(root, depth, hash_len, counter).verify(path)


def root_from_frontier(slice_: FrontierSlice, hash_len: int,
                       counter: Optional[HashCounter] = None) -> bytes:
    nodes = list(slice_.nodes)
    if len(nodes) != 1 << slice_.level:
        raise ValueError("frontier slice has wrong width")
    for _ in range(slice_.level):
        nodes = [combine(nodes[i], nodes[i + 1], hash_len, counter)
                 for i in range(0, len(nodes), 2)]
    return nodes[0]


class DeltaMerkleTree:
    """Copy-on-write overlay over a committed tree.

    Holds only the touched leaves; interior digests are computed on demand
    (memoized down to ``memo_rows``) so memory stays proportional to the
    update set.  ``materialize()`` produces the next committed tree.
    """

    def __init__(self, base: SparseMerkleTree, memo_rows: int = 13):
        self.base = base
        self.depth = base.depth
        self.theta = base.theta
        self.hash_len = base.hash_len
        self.nulls = base.nulls
        self._overlay: dict[int, tuple[Pair, ...]] = {}
        self._touched: list[int] = []
        self._memo_rows = memo_rows
        self._memo: dict[tuple[int, int], bytes] = {}
        self._updates: dict[bytes, bytes] = {}

    def apply(self, updates: Mapping[bytes, bytes]) -> bytes:
        """Apply a key->value batch; returns the new root."""
        by_leaf: dict[int, dict[bytes, bytes]] = {}
        for k, v in updates.items():
            by_leaf.setdefault(leaf_index(k, self.depth), {})[k] = v
        for idx, kv in sorted(by_leaf.items()):
            pairs = self._overlay.get(idx)
            if pairs is None:
                pairs = self.base.leaf_pairs(idx)
            merged = dict(pairs)
            before = len(merged)
            merged.update(kv)
            if len(merged) > self.theta and len(merged) > before:
                raise LeafFull(f"leaf {idx} would hold {len(merged)} > {self.theta} keys")
            if idx not in self._overlay:
                insort(self._touched, idx)
            self._overlay[idx] = _canonical_pairs(merged.items())
        self._updates.update(updates)
        self._memo.clear()
        return self.root

    @property
    def updates(self) -> dict[bytes, bytes]:
        return dict(self._updates)

    def changed_leaves_under(self, row: int, idx: int) -> list[int]:
        lo = idx << (self.depth - row)
        hi = (idx + 1) << (self.depth - row)
        a = bisect_left(self._touched, lo)
        b = bisect_right(self._touched, hi - 1)
        return self._touched[a:b]

    def leaf_pairs(self, idx: int) -> tuple[Pair, ...]:
        pairs = self._overlay.get(idx)
        if pairs is None:
            pairs = self.base.leaf_pairs(idx)
        return pairs

    def node(self, row: int, idx: int) -> bytes:
        if not self.changed_leaves_under(row, idx):
            return self.base.node(row, idx)
        if row <= self._memo_rows:
            cached = self._memo.get((row, idx))
            if cached is not None:
                return cached
        if row == self.depth:
            dg = leaf_digest(self.leaf_pairs(idx), self.hash_len)
        else:
            dg = combine(self.node(row + 1, idx << 1),
                         self.node(row + 1, (idx << 1) | 1), self.hash_len)
        if row <= self._memo_rows:
            self._memo[(row, idx)] = dg
        return dg

    @property
    def root(self) -> bytes:
        return self.node(0, 0)

    def frontier(self, level: int) -> FrontierSlice:
        if not 0 <= level <= self.depth:
            raise ValueError("frontier level out of range")
        return FrontierSlice(level, tuple(self.node(level, i) for i in range(1 << level)))

    def path_siblings_below(self, idx: int, level: int) -> tuple[bytes, ...]:
        """Siblings of leaf ``idx`` from the leaf row up to (excluding) ``level``."""
        sibs = []
        for r in range(self.depth, level, -1):
            i = idx >> (self.depth - r)
            sibs.append(self.node(r, i ^ 1))
        return tuple(sibs)

    def materialize(self) -> SparseMerkleTree:
        merged: dict[bytes, bytes] = dict(self.base.items())
        merged.update(self._updates)
        return SparseMerkleTree.from_items(merged, self.depth, self.theta, self.hash_len)


def delta_apply(base: SparseMerkleTree, updates: Mapping[bytes, bytes],
                memo_rows: int = 13) -> tuple[DeltaMerkleTree, bytes]:
    """Overlay ``updates`` on ``base``; returns (delta, new root).

    The base tree is not modified; the delta root equals a full rebuild
    with the same updates.
    """
    delta = DeltaMerkleTree(base, memo_rows=memo_rows)
    new_root = delta.apply(updates)
    return delta, new_root


@dataclass(frozen=True)
class LeafUpdateEntry:
    """Per-changed-leaf material inside an update proof bundle.

    ``t_siblings`` authenticate the leaf's old content (and every sibling
    along its path) against the committed root; ``tp_siblings`` are the
    claimed new-tree siblings below the frontier row.
    """

    leaf_idx: int
    old_colocated: tuple[Pair, ...]
    t_siblings: tuple[bytes, ...]
    new_colocated: tuple[Pair, ...]
    tp_siblings: tuple[bytes, ...]


@dataclass(frozen=True)
class UpdateProofBundle:
    """Proof that one frontier node of the updated tree is correct.

    For a frontier node with no changed leaves underneath, the bundle
    instead carries the old tree's node digest and its path to the root.
    """

    frontier_index: int
    claimed_digest: bytes
    entries: tuple[LeafUpdateEntry, ...]
    node_digest: Optional[bytes] = None
    node_siblings: Optional[tuple[bytes, ...]] = None


def subtree_update_proof(base: SparseMerkleTree, delta: DeltaMerkleTree,
                         frontier_index: int, level: int) -> UpdateProofBundle:
    """Build the politician-side proof bundle for one frontier node."""
    changed = delta.changed_leaves_under(level, frontier_index)
    claimed = delta.node(level, frontier_index)
    if not changed:
        sibs = []
        for r in range(level, 0, -1):
            i = frontier_index >> (level - r)
            sibs.append(base.node(r, i ^ 1))
        return UpdateProofBundle(
            frontier_index=frontier_index, claimed_digest=claimed, entries=(),
            node_digest=base.node(level, frontier_index), node_siblings=tuple(sibs))
    entries = []
    for idx in changed:
        entries.append(LeafUpdateEntry(
            leaf_idx=idx,
            old_colocated=base.leaf_pairs(idx),
            t_siblings=base.path_siblings(idx),
            new_colocated=delta.leaf_pairs(idx),
            tp_siblings=delta.path_siblings_below(idx, level),
        ))
    return UpdateProofBundle(frontier_index=frontier_index, claimed_digest=claimed,
                             entries=tuple(entries))


def expected_new_pairs(old: tuple[Pair, ...], updates: Mapping[bytes, bytes]) -> tuple[Pair, ...]:
    merged = dict(old)
    merged.update(updates)
    return _canonical_pairs(merged.items())


def verify_update_proof(bundle: UpdateProofBundle, t_verifier: PathVerifier,
                        changed_by_leaf: Mapping[int, Mapping[bytes, bytes]],
                        level: int, counter: Optional[HashCounter] = None,
                        ) -> tuple[bool, Optional[bytes]]:
    """Citizen-side check of one frontier node against known updates.

    ``t_verifier`` is anchored at the committed old root; ``changed_by_leaf``
    maps every changed leaf index to its key->new-value updates (the citizen
    knows the full update set, hence which leaves under this frontier node
    must appear).  Returns (ok, recomputed frontier digest).  When ok, the
    digest is the true one: it is derived only from authenticated old
    content and the citizen's own updates, so a lying politician cannot
    make a wrong digest verify.
    """
    depth = t_verifier.depth
    hash_len = t_verifier.hash_len
    f = bundle.frontier_index
    lo = f << (depth - level)
    hi = (f + 1) << (depth - level)
    expected = sorted(i for i in changed_by_leaf if lo <= i < hi)

    if not expected:
        if bundle.entries or bundle.node_digest is None or bundle.node_siblings is None:
            return False, None
        if not t_verifier.climb(level, f, bundle.node_digest, bundle.node_siblings):
            return False, None
        return True, bundle.node_digest

    if [e.leaf_idx for e in bundle.entries] != expected:
        return False, None

    computed: dict[tuple[int, int], bytes] = {}
    authenticated_sib: dict[tuple[int, int], bytes] = {}
    for e in bundle.entries:
        if len(e.t_siblings) != depth or len(e.tp_siblings) != depth - level:
            return False, None
        old_dg = leaf_digest(e.old_colocated, hash_len, counter)
        if not t_verifier.climb(depth, e.leaf_idx, old_dg, e.t_siblings):
            return False, None
        if e.new_colocated != expected_new_pairs(e.old_colocated, changed_by_leaf[e.leaf_idx]):
            return False, None
        computed[(depth, e.leaf_idx)] = leaf_digest(e.new_colocated, hash_len, counter)
        for j, sib in enumerate(e.t_siblings):
            r = depth - j
            authenticated_sib[(r, (e.leaf_idx >> (depth - r)) ^ 1)] = sib

    changed_set = set(expected)

    def subtree_changed(r: int, i: int) -> bool:
        shift = depth - r
        return any(i == (x >> shift) for x in changed_set)

    for r in range(depth, level, -1):
        shift = depth - r
        parents = sorted({i >> 1 for (rr, i) in computed if rr == r})
        for p in parents:
            li, ri = p << 1, (p << 1) | 1
            parts = []
            for ci in (li, ri):
                dg = computed.get((r, ci))
                if dg is None:
                    if subtree_changed(r, ci):
                        return False, None
                    dg = authenticated_sib.get((r, ci))
                    if dg is None:
                        return False, None
                parts.append(dg)
            computed[(r - 1, p)] = combine(parts[0], parts[1], hash_len, counter)

    # The served T'-siblings must match what the verifier derived; a
    # mismatch is a lie even if the final digest would come out right.
    for e in bundle.entries:
        for j, served in enumerate(e.tp_siblings):
            r = depth - j
            ci = (e.leaf_idx >> (depth - r)) ^ 1
            dg = computed.get((r, ci))
            if dg is None:
                dg = authenticated_sib.get((r, ci))
            if dg is None or served != dg:
                return False, None

    return True, computed[(level, f)]
