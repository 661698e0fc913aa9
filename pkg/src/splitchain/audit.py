"""Independent chain auditor.

Replays a chain dump from genesis with its own state tree and its own
transaction-application loop (deliberately separate from the block builder
the nodes run): checks hash chaining, sub-block chaining, identity
certificates and TEE dedup, commit-signature thresholds with committee
membership proofs, transaction validity in committed order, and the
per-block global-state roots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from . import crypto, sortition
from .chaindump import DumpBlock, DumpHeader, read_dump
from .ledger import (
    GENESIS_PREV_HASH,
    apply_transaction,
    commit_message,
    decode_value,
    validate_transaction,
    verify_identity_certs,
    TxValidity,
)
from .smt import SparseMerkleTree


@dataclass
class AuditReport:
    ok: bool
    height: int
    failure: Optional[str] = None
    blocks_checked: int = 0
    tx_checked: int = 0

    def __bool__(self) -> bool:
        return self.ok


def _fail(height: int, what: str, blocks: int, txs: int) -> AuditReport:
    return AuditReport(ok=False, height=height,
                       failure=f"height {height}: {what}",
                       blocks_checked=blocks, tx_checked=txs)


def audit_chain(header: DumpHeader, blocks: Iterable[DumpBlock]) -> AuditReport:
    tree = SparseMerkleTree.from_items(header.state, header.depth,
                                       header.theta, header.hash_len)
    if tree.root != header.genesis_root:
        return _fail(0, "genesis root mismatch", 0, 0)

    registered: dict[bytes, int] = {}   # vk -> added_at
    tee_seen: set[bytes] = set()
    for ident in header.identities:
        if not verify_identity_certs(header.registrar_vk, ident):
            return _fail(0, "genesis identity certificate invalid", 0, 0)
        if ident.tk in tee_seen:
            return _fail(0, "genesis TEE duplicated", 0, 0)
        tee_seen.add(ident.tk)
        registered[ident.vk] = ident.added_at_block

    # The genesis block is canonical: empty, zero prev hashes.  Recompute
    # it so the dumped genesis hash and the first sub-block link are pinned.
    from .ledger import Block, SubBlock
    genesis_sb = SubBlock(height=0, new_identities=(),
                          hash_prev_block=GENESIS_PREV_HASH,
                          hash_prev_subblock=GENESIS_PREV_HASH)
    genesis = Block(height=0, hash_prev_block=GENESIS_PREV_HASH,
                    subblock=genesis_sb, id_list=(), tx_list=())
    if genesis.hash() != header.genesis_hash:
        return _fail(0, "genesis hash mismatch", 0, 0)

    prev_hash = header.genesis_hash
    hashes = {0: header.genesis_hash}
    prev_sb_hash: Optional[bytes] = genesis_sb.hash()
    n_blocks = 0
    n_txs = 0

    for blk in blocks:
        h = blk.height
        if h != n_blocks + 1:
            return _fail(h, "height gap", n_blocks, n_txs)
        if blk.prev_hash != prev_hash:
            return _fail(h, "broken block hash chain", n_blocks, n_txs)
        rebuilt = blk.rebuild_block()
        if rebuilt.hash() != blk.hash:
            return _fail(h, "block hash does not match contents", n_blocks, n_txs)
        sb = rebuilt.subblock
        if sb.hash_prev_subblock != prev_sb_hash:
            return _fail(h, "broken sub-block hash chain", n_blocks, n_txs)
        if sb.hash() != blk.sb_hash:
            return _fail(h, "sub-block hash mismatch", n_blocks, n_txs)

        # Commit signatures: registered, cool-off respected, in committee,
        # and above threshold.
        seed_height = max(h - 10, 0)
        seed = hashes.get(seed_height)
        if seed is None:
            return _fail(h, "missing sortition seed", n_blocks, n_txs)
        cutoff = h - header.cooloff
        signers: set[bytes] = set()
        msg = commit_message(blk.hash, blk.gs_root, blk.sb_hash, h)
        for sig in blk.sigs:
            vk = sig.signer_vk
            if vk in signers:
                continue
            added = registered.get(vk)
            if added is None or added > cutoff:
                return _fail(h, "signer outside registered set", n_blocks, n_txs)
            vrf = blk.memberships.get(vk)
            if vrf is None or not sortition.verify_membership(
                    vk, vrf, seed, h, header.k_bits):
                return _fail(h, "bad committee membership proof", n_blocks, n_txs)
            if not crypto.verify(vk, msg, sig.signature):
                return _fail(h, "bad commit signature", n_blocks, n_txs)
            signers.add(vk)
        if len(signers) < header.t_star:
            return _fail(h, "commit signatures below threshold", n_blocks, n_txs)

        # Identity additions.
        for ident in blk.identities:
            if not verify_identity_certs(header.registrar_vk, ident):
                return _fail(h, "identity certificate invalid", n_blocks, n_txs)
            if ident.tk in tee_seen:
                return _fail(h, "TEE already has an identity", n_blocks, n_txs)
            tee_seen.add(ident.tk)
            registered[ident.vk] = h

        # Replay transactions in committed order against our own tree.
        state_view: dict[bytes, Optional[bytes]] = {}
        seen_uuids: set[bytes] = set()
        for tx in blk.txs:
            if tx.uuid in seen_uuids:
                return _fail(h, "duplicate transaction uuid", n_blocks, n_txs)
            seen_uuids.add(tx.uuid)
            for key in tx.keys:
                if key not in state_view:
                    state_view[key] = tree.get(key)
            if validate_transaction(tx, state_view) is not TxValidity.VALID:
                return _fail(h, "invalid transaction committed", n_blocks, n_txs)
            apply_transaction(tx, state_view)
            n_txs += 1
        for key, value in sorted(state_view.items()):
            if value is not None:
                tree.put(key, value)
        if tree.root != blk.gs_root:
            return _fail(h, "global-state root mismatch", n_blocks, n_txs)

        prev_hash = blk.hash
        prev_sb_hash = blk.sb_hash
        hashes[h] = blk.hash
        n_blocks += 1

    return AuditReport(ok=True, height=n_blocks, blocks_checked=n_blocks,
                       tx_checked=n_txs)


def audit_dump_file(path: str) -> AuditReport:
    header, blocks = read_dump(path)
    return audit_chain(header, blocks)
