"""Canonical chain storage and the honest politician's serving views.

The store holds committed blocks, per-height commit signatures and
membership proofs, cached hashes, and the current materialized state tree.
Honest politicians serve getLedger bundles and state queries from here;
adversarial behaviors wrap these views and distort what they return.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from . import crypto
from .crypto import VrfOutput
from .ledger import (
    GENESIS_PREV_HASH,
    Block,
    CommitSignature,
    Identity,
    LedgerBundle,
    LocalState,
    SubBlock,
    empty_block,
)
from .smt import SparseMerkleTree


@dataclass(frozen=True)
class ChainParams:
    depth: int
    theta: int
    hash_len: int
    k_bits: int
    t_star: int
    cooloff: int = 40


class ChainStore:
    def __init__(self, params: ChainParams, registrar_vk: bytes,
                 genesis_identities: Sequence[Identity],
                 genesis_items: dict[bytes, bytes]):
        self.params = params
        self.registrar_vk = registrar_vk
        self.genesis_identities = tuple(genesis_identities)
        self.genesis_items = dict(genesis_items)

        sb = SubBlock(height=0, new_identities=(),
                      hash_prev_block=GENESIS_PREV_HASH,
                      hash_prev_subblock=GENESIS_PREV_HASH)
        genesis = Block(height=0, hash_prev_block=GENESIS_PREV_HASH,
                        subblock=sb, id_list=(), tx_list=())
        self.tree = SparseMerkleTree.from_items(
            genesis_items, params.depth, params.theta, params.hash_len)
        self.blocks: list[Block] = [genesis]
        self.hashes: list[bytes] = [genesis.hash()]
        self.sb_hashes: list[bytes] = [sb.hash()]
        self.roots: list[bytes] = [self.tree.root]
        self.sigs: list[tuple[CommitSignature, ...]] = [()]
        self.memberships: list[dict[bytes, VrfOutput]] = [{}]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def block_hash(self, height: int) -> bytes:
        return self.hashes[height]

    def seed_for_round(self, round_no: int, lag: int = 10) -> bytes:
        """Sortition seed for a round: hash of the block ``lag`` back
        (clamped at genesis for early rounds)."""
        return self.hashes[max(round_no - lag, 0)]

    def append(self, block: Block, new_root: bytes,
               sigs: Sequence[CommitSignature],
               memberships: dict[bytes, VrfOutput],
               tree: Optional[SparseMerkleTree] = None) -> None:
        assert block.height == self.height + 1
        assert block.hash_prev_block == self.hashes[-1]
        self.blocks.append(block)
        self.hashes.append(block.hash())
        self.sb_hashes.append(block.subblock.hash())
        self.roots.append(new_root)
        self.sigs.append(tuple(sigs))
        self.memberships.append(dict(memberships))
        if tree is not None:
            self.tree = tree

    def bundle(self, from_height: int, to_height: int) -> Optional[LedgerBundle]:
        if not 0 <= from_height < to_height <= self.height:
            return None
        return LedgerBundle(
            height=to_height,
            hash_block=self.hashes[to_height],
            gs_root=self.roots[to_height],
            hash_subblock=self.sb_hashes[to_height],
            commit_sigs=self.sigs[to_height],
            memberships=self.memberships[to_height],
            subblocks=tuple(b.subblock for b in
                            self.blocks[from_height + 1:to_height + 1]),
        )

    def genesis_local_state(self) -> LocalState:
        # The registered map is shared: LocalState updates copy on write.
        if not hasattr(self, "_genesis_registered"):
            self._genesis_registered = {
                i.vk: (i.tk, i.added_at_block) for i in self.genesis_identities}
        return LocalState(
            height=0, hash_block=self.hashes[0], gs_root=self.roots[0],
            hash_subblock=self.sb_hashes[0], registered=self._genesis_registered,
            recent_hashes={0: self.hashes[0]})

    def make_empty_block(self) -> Block:
        return empty_block(self.height + 1, self.hashes[-1], self.sb_hashes[-1])


class HonestLedgerView:
    """getLedger view served straight from the canonical store."""

    def __init__(self, store: ChainStore):
        self.store = store

    def claimed_height(self) -> int:
        return self.store.height

    def ledger_bundle(self, from_height: int, to_height: int
                      ) -> Optional[LedgerBundle]:
        return self.store.bundle(from_height, to_height)


class StaleLedgerView:
    """Staleness behavior: pretends the chain stopped ``lag`` blocks ago."""

    def __init__(self, store: ChainStore, lag: int = 1):
        self.store = store
        self.lag = lag

    def claimed_height(self) -> int:
        return max(self.store.height - self.lag, 0)

    def ledger_bundle(self, from_height: int, to_height: int
                      ) -> Optional[LedgerBundle]:
        if to_height > self.claimed_height():
            return None
        return self.store.bundle(from_height, to_height)
