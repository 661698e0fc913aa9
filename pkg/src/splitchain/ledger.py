"""Blocks, sub-blocks, transactions, identities, and structural verification.

Citizens never hold the chain; they hold a small verified ``LocalState`` and
advance it through :func:`get_ledger`, which checks commit-signature
thresholds, committee membership proofs, and the chained identity
sub-blocks, jumping up to 10 blocks per call.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from . import crypto, sortition
from .crypto import KeyPair, VrfOutput
from .sortition import COOLOFF_BLOCKS

GENESIS_PREV_HASH = bytes(32)


def encode_value(n: int) -> bytes:
    return struct.pack(">I", n)


def decode_value(b: Optional[bytes]) -> int:
    if b is None:
        return 0
    return struct.unpack(">I", b)[0]


def balance_key(account_id: int) -> bytes:
    return struct.pack(">I", account_id << 1)


def nonce_key(account_id: int) -> bytes:
    return struct.pack(">I", (account_id << 1) | 1)


def nonce_key_for_balance_key(debit_key: bytes) -> bytes:
    (raw,) = struct.unpack(">I", debit_key)
    return struct.pack(">I", raw | 1)


class TxValidity(enum.Enum):
    VALID = "valid"
    BAD_SIGNATURE = "bad_signature"
    BAD_NONCE = "bad_nonce"
    OVERSPEND = "overspend"


@dataclass(frozen=True)
class Transaction:
    """Debit/credit transfer touching three global-state keys.

    The third key is the originator's nonce counter, derived from the debit
    key.  ``uuid`` is the 8-byte identifier hash(originator || nonce).
    """

    uuid: bytes
    originator_vk: bytes
    nonce: int
    debit_key: bytes
    credit_key: bytes
    amount: int
    signature: bytes

    @property
    def nonce_key(self) -> bytes:
        return nonce_key_for_balance_key(self.debit_key)

    @property
    def keys(self) -> tuple[bytes, bytes, bytes]:
        return (self.debit_key, self.credit_key, self.nonce_key)


def tx_payload(originator_vk: bytes, nonce: int, debit_key: bytes,
               credit_key: bytes, amount: int) -> bytes:
    return b"tx" + originator_vk + nonce.to_bytes(8, "big") + debit_key + \
        credit_key + amount.to_bytes(8, "big")


def tx_uuid(originator_vk: bytes, nonce: int) -> bytes:
    return crypto.hash_bytes(originator_vk + nonce.to_bytes(8, "big"))[:8]


def make_transaction(keypair: KeyPair, nonce: int, debit_key: bytes,
                     credit_key: bytes, amount: int) -> Transaction:
    vk = keypair.verification_key
    payload = tx_payload(vk, nonce, debit_key, credit_key, amount)
    return Transaction(
        uuid=tx_uuid(vk, nonce), originator_vk=vk, nonce=nonce,
        debit_key=debit_key, credit_key=credit_key, amount=amount,
        signature=crypto.sign(keypair, payload))


def validate_transaction(tx: Transaction,
                         key_values: Mapping[bytes, Optional[bytes]]) -> TxValidity:
    """Valid iff the signature checks, the nonce is exactly next, and the
    debit balance covers the amount.  Invalid transactions are dropped by
    block builders, not raised."""
    payload = tx_payload(tx.originator_vk, tx.nonce, tx.debit_key,
                         tx.credit_key, tx.amount)
    if tx.uuid != tx_uuid(tx.originator_vk, tx.nonce):
        return TxValidity.BAD_SIGNATURE
    if not crypto.verify(tx.originator_vk, payload, tx.signature):
        return TxValidity.BAD_SIGNATURE
    stored_nonce = decode_value(key_values.get(tx.nonce_key))
    if tx.nonce != stored_nonce + 1:
        return TxValidity.BAD_NONCE
    balance = decode_value(key_values.get(tx.debit_key))
    if tx.amount > balance:
        return TxValidity.OVERSPEND
    return TxValidity.VALID


def apply_transaction(tx: Transaction, state: dict[bytes, bytes]) -> None:
    debit = decode_value(state.get(tx.debit_key))
    credit = decode_value(state.get(tx.credit_key))
    state[tx.debit_key] = encode_value(debit - tx.amount)
    state[tx.credit_key] = encode_value(credit + tx.amount)
    state[tx.nonce_key] = encode_value(tx.nonce)


# -- identities ----------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    """A citizen identity: TEE key, certified verification key, add height.

    Certificates are issued by a scenario registrar standing in for the
    platform vendor; uniqueness of ``tk`` is the enforced semantic.
    """

    tk: bytes
    cert_tk: bytes
    vk: bytes
    cert_vk: bytes
    added_at_block: int = -1


def make_identity(registrar: KeyPair, tee_seed: bytes, keypair: KeyPair) -> Identity:
    tk = crypto.hash_bytes(b"tee" + tee_seed)
    return Identity(
        tk=tk,
        cert_tk=crypto.sign(registrar, b"cert-tk" + tk),
        vk=keypair.verification_key,
        cert_vk=crypto.sign(registrar, b"cert-vk" + tk + keypair.verification_key),
    )


def verify_identity_certs(registrar_vk: bytes, ident: Identity) -> bool:
    return crypto.verify(registrar_vk, b"cert-tk" + ident.tk, ident.cert_tk) and \
        crypto.verify(registrar_vk, b"cert-vk" + ident.tk + ident.vk, ident.cert_vk)


class RegistrationResult(enum.Enum):
    ACCEPTED = "accepted"
    DUPLICATE_TEE = "duplicate_tee"
    BAD_CERT = "bad_cert"


class IdentityRegistry:
    """Registered identities with the one-active-identity-per-TEE rule."""

    def __init__(self, registrar_vk: bytes):
        self.registrar_vk = registrar_vk
        self._by_tk: dict[bytes, Identity] = {}
        self._by_vk: dict[bytes, Identity] = {}
        self.ordered: list[Identity] = []

    def register(self, ident: Identity, at_block: int) -> RegistrationResult:
        if not verify_identity_certs(self.registrar_vk, ident):
            return RegistrationResult.BAD_CERT
        if ident.tk in self._by_tk:
            return RegistrationResult.DUPLICATE_TEE
        registered = replace(ident, added_at_block=at_block)
        self._by_tk[ident.tk] = registered
        self._by_vk[ident.vk] = registered
        self.ordered.append(registered)
        return RegistrationResult.ACCEPTED

    def get_by_vk(self, vk: bytes) -> Optional[Identity]:
        return self._by_vk.get(vk)

    def has_tk(self, tk: bytes) -> bool:
        return tk in self._by_tk

    def added_at(self, vk: bytes) -> Optional[int]:
        ident = self._by_vk.get(vk)
        return None if ident is None else ident.added_at_block

    def known_at(self, vk: bytes, height: int) -> bool:
        """Identity present in GS-PK_height."""
        ident = self._by_vk.get(vk)
        return ident is not None and ident.added_at_block <= height

    def eligible(self, vk: bytes, round_no: int,
                 cooloff: int = COOLOFF_BLOCKS) -> bool:
        ident = self._by_vk.get(vk)
        return ident is not None and sortition.eligible_at(
            ident.added_at_block, round_no, cooloff)

    def __len__(self) -> int:
        return len(self.ordered)


# -- blocks ---------------------------------------------------------------


def _ident_bytes(ident: Identity) -> bytes:
    return ident.tk + ident.cert_tk + ident.vk + ident.cert_vk


@dataclass(frozen=True)
class SubBlock:
    """Identity sub-block; chained by hash to the previous sub-block."""

    height: int
    new_identities: tuple[Identity, ...]
    hash_prev_block: bytes
    hash_prev_subblock: bytes

    def hash(self) -> bytes:
        parts = [b"sb", self.height.to_bytes(8, "big"), self.hash_prev_block,
                 self.hash_prev_subblock]
        parts.extend(_ident_bytes(i) for i in self.new_identities)
        return crypto.hash_bytes(b"".join(parts))


def _tx_bytes(tx: Transaction) -> bytes:
    return tx.uuid + tx.originator_vk + tx.nonce.to_bytes(8, "big") + \
        tx.debit_key + tx.credit_key + tx.amount.to_bytes(8, "big") + tx.signature


@dataclass(frozen=True)
class Block:
    """One committed block: ordered valid transactions plus the identity
    sub-block and the commitment list it realizes."""

    height: int
    hash_prev_block: bytes
    subblock: SubBlock
    id_list: tuple[bytes, ...]  # pool digests in designated order
    tx_list: tuple[Transaction, ...]

    def hash(self) -> bytes:
        parts = [b"blk", self.height.to_bytes(8, "big"), self.hash_prev_block,
                 self.subblock.hash()]
        parts.extend(self.id_list)
        parts.extend(_tx_bytes(t) for t in self.tx_list)
        return crypto.hash_bytes(b"".join(parts))

    @property
    def empty(self) -> bool:
        return not self.tx_list and not self.id_list


def commit_message(hash_block: bytes, gs_root: bytes, hash_subblock: bytes,
                   height: int) -> bytes:
    # Signed tuple covers the block hash, state root, sub-block hash and
    # height, which serves both structural verification and block commit.
    return b"commit" + hash_block + gs_root + hash_subblock + height.to_bytes(8, "big")


@dataclass(frozen=True)
class CommitSignature:
    signer_vk: bytes
    signature: bytes

    def verify(self, hash_block: bytes, gs_root: bytes, hash_subblock: bytes,
               height: int) -> bool:
        return crypto.verify(self.signer_vk,
                             commit_message(hash_block, gs_root, hash_subblock, height),
                             self.signature)


def sign_commit(keypair: KeyPair, hash_block: bytes, gs_root: bytes,
                hash_subblock: bytes, height: int) -> CommitSignature:
    return CommitSignature(
        signer_vk=keypair.verification_key,
        signature=crypto.sign(keypair, commit_message(hash_block, gs_root,
                                                      hash_subblock, height)))


# -- deterministic block construction -------------------------------------


@dataclass
class BuildResult:
    block: Block
    updates: dict[bytes, bytes]
    applied: tuple[Transaction, ...]
    dropped: tuple[tuple[Transaction, TxValidity], ...]
    touched_keys: tuple[bytes, ...]


def referenced_keys(pools: Iterable[Sequence[Transaction]]) -> list[bytes]:
    keys: set[bytes] = set()
    for pool in pools:
        for tx in pool:
            keys.update(tx.keys)
    return sorted(keys)


def build_block(height: int, hash_prev_block: bytes, hash_prev_subblock: bytes,
                ordered_pools: Sequence[tuple[bytes, Sequence[Transaction]]],
                key_values: Mapping[bytes, Optional[bytes]],
                new_identities: Sequence[Identity] = (),
                ) -> BuildResult:
    """Deterministic block construction every honest executor reproduces.

    Pools are concatenated in commitment-list order, duplicate uuids keep
    the first occurrence, and transactions are validated and applied
    sequentially so conflicting spends resolve to the earliest.
    """
    seen: set[bytes] = set()
    working: dict[bytes, Optional[bytes]] = dict(key_values)
    applied: list[Transaction] = []
    dropped: list[tuple[Transaction, TxValidity]] = []
    for _digest, pool in ordered_pools:
        for tx in pool:
            if tx.uuid in seen:
                continue
            seen.add(tx.uuid)
            verdict = validate_transaction(tx, working)
            if verdict is TxValidity.VALID:
                apply_transaction(tx, working)  # type: ignore[arg-type]
                applied.append(tx)
            else:
                dropped.append((tx, verdict))
    touched: set[bytes] = set()
    for tx in applied:
        touched.update(tx.keys)
    updates = {k: working[k] for k in touched}
    subblock = SubBlock(height=height, new_identities=tuple(new_identities),
                        hash_prev_block=hash_prev_block,
                        hash_prev_subblock=hash_prev_subblock)
    block = Block(height=height, hash_prev_block=hash_prev_block,
                  subblock=subblock,
                  id_list=tuple(d for d, _ in ordered_pools),
                  tx_list=tuple(applied))
    return BuildResult(block=block, updates=updates, applied=tuple(applied),
                       dropped=tuple(dropped), touched_keys=tuple(sorted(touched)))


def empty_block(height: int, hash_prev_block: bytes,
                hash_prev_subblock: bytes) -> Block:
    """Canonical empty block: chains the hashes, commits nothing."""
    subblock = SubBlock(height=height, new_identities=(),
                        hash_prev_block=hash_prev_block,
                        hash_prev_subblock=hash_prev_subblock)
    return Block(height=height, hash_prev_block=hash_prev_block,
                 subblock=subblock, id_list=(), tx_list=())


# -- citizen local state and getLedger -------------------------------------


@dataclass
class LocalState:
    """A citizen's verified view of the chain at ``height``.

    ``recent_hashes`` maps heights in [height-9, height] to block hashes
    (the stored hash chain); ``registered`` maps vk -> (tk, added_at) for
    every identity accumulated from the sub-block chain.
    """

    height: int
    hash_block: bytes
    gs_root: bytes
    hash_subblock: bytes
    registered: dict[bytes, tuple[bytes, int]]
    recent_hashes: dict[int, bytes]

    def hash_at(self, height: int) -> Optional[bytes]:
        return self.recent_hashes.get(height)

    def knows_identity(self, vk: bytes, cutoff_height: int) -> bool:
        entry = self.registered.get(vk)
        return entry is not None and entry[1] <= cutoff_height

    def eligible(self, vk: bytes, round_no: int,
                 cooloff: int = COOLOFF_BLOCKS) -> bool:
        entry = self.registered.get(vk)
        return entry is not None and sortition.eligible_at(entry[1], round_no, cooloff)

    def clone(self) -> "LocalState":
        return LocalState(self.height, self.hash_block, self.gs_root,
                          self.hash_subblock, dict(self.registered),
                          dict(self.recent_hashes))


@dataclass(frozen=True)
class LedgerBundle:
    """One politician's response to a getLedger request."""

    height: int
    hash_block: bytes
    gs_root: bytes
    hash_subblock: bytes
    commit_sigs: tuple[CommitSignature, ...]
    memberships: dict[bytes, VrfOutput]
    subblocks: tuple[SubBlock, ...]  # heights from+1 .. height


class PoliticianLedgerView(Protocol):
    def claimed_height(self) -> int: ...

    def ledger_bundle(self, from_height: int, to_height: int) -> Optional[LedgerBundle]: ...


@dataclass(frozen=True)
class GetLedgerParams:
    t_star: int
    k_bits: int
    registrar_vk: bytes
    cooloff: int = COOLOFF_BLOCKS
    max_jump: int = 10


@dataclass
class GetLedgerOutcome:
    accepted: bool
    state: Optional[LocalState]
    source: Optional[int]
    reason: str = ""
    evidence: list[tuple[int, str]] = field(default_factory=list)


def _verify_bundle(state: LocalState, bundle: LedgerBundle, target: int,
                   params: GetLedgerParams) -> tuple[bool, str, Optional[LocalState]]:
    if bundle.height != target:
        return False, "height_mismatch", None

    # Membership seed: hash of the block 10 back from the target, taken from
    # the stored hash chain (jumps never exceed 10, so it is always local).
    seed_height = max(target - params.max_jump, 0)
    seed = state.hash_at(seed_height)
    if seed is None:
        return False, "missing_seed_hash", None

    cutoff = target - params.cooloff
    signers: set[bytes] = set()
    for sig in bundle.commit_sigs:
        vk = sig.signer_vk
        if vk in signers:
            continue
        if not state.knows_identity(vk, cutoff):
            return False, "signer_not_registered", None
        vrf = bundle.memberships.get(vk)
        if vrf is None or not sortition.verify_membership(vk, vrf, seed, target,
                                                          params.k_bits):
            return False, "bad_membership_proof", None
        if not sig.verify(bundle.hash_block, bundle.gs_root,
                          bundle.hash_subblock, target):
            return False, "bad_commit_signature", None
        signers.add(vk)
    if len(signers) < params.t_star:
        return False, "below_threshold", None

    expected = target - state.height
    if len(bundle.subblocks) != expected:
        return False, "subblock_count", None
    prev_sb_hash = state.hash_subblock
    prev_b_hash = state.hash_block
    # Copy-on-write: the registered map is only duplicated when the jump
    # actually adds identities.
    registered = state.registered
    tks: Optional[set[bytes]] = None
    hashes = dict(state.recent_hashes)
    for offset, sb in enumerate(bundle.subblocks):
        h = state.height + 1 + offset
        if sb.height != h:
            return False, "subblock_height", None
        if sb.hash_prev_subblock != prev_sb_hash:
            return False, "subblock_chain_broken", None
        if sb.hash_prev_block != prev_b_hash:
            return False, "block_chain_broken", None
        for ident in sb.new_identities:
            if not verify_identity_certs(params.registrar_vk, ident):
                return False, "bad_identity_cert", None
            if tks is None:
                registered = dict(state.registered)
                tks = {tk for tk, _ in registered.values()}
            if ident.tk in tks:
                return False, "duplicate_tee_in_subblock", None
            tks.add(ident.tk)
            registered[ident.vk] = (ident.tk, h)
        prev_sb_hash = sb.hash()
        # The next sub-block's hash_prev_block commits the hash of this
        # block; recover it from the chain as we walk.
        if offset + 1 < len(bundle.subblocks):
            prev_b_hash = bundle.subblocks[offset + 1].hash_prev_block
            hashes[h] = prev_b_hash
        else:
            hashes[h] = bundle.hash_block
    if prev_sb_hash != bundle.hash_subblock:
        return False, "subblock_hash_mismatch", None

    # hash_prev_block fields are only self-consistent so far; the final
    # block hash is pinned by the signatures, and each intermediate block
    # hash is pinned by its successor's sub-block, which chains to the
    # signed one.
    new_state = LocalState(
        height=target, hash_block=bundle.hash_block, gs_root=bundle.gs_root,
        hash_subblock=bundle.hash_subblock, registered=registered,
        recent_hashes={h: v for h, v in hashes.items() if h >= target - 9},
    )
    return True, "", new_state


def get_ledger(state: LocalState, views: Mapping[int, PoliticianLedgerView],
               params: GetLedgerParams,
               target: Optional[int] = None) -> GetLedgerOutcome:
    """Advance a citizen's verified state using untrusted politicians.

    Queries every view for its claimed height, tries the highest claim
    first, and accepts the first bundle that passes every structural check.
    Politicians serving provably bad data are returned as evidence.
    """
    claims = sorted(
        ((view.claimed_height(), pid) for pid, view in views.items()),
        key=lambda t: (-t[0], t[1]))
    evidence: list[tuple[int, str]] = []
    for claimed, pid in claims:
        if claimed <= state.height:
            continue
        jump_to = min(claimed, state.height + params.max_jump)
        if target is not None:
            jump_to = min(jump_to, target)
            if jump_to <= state.height:
                continue
        bundle = views[pid].ledger_bundle(state.height, jump_to)
        if bundle is None:
            evidence.append((pid, "no_bundle_for_claim"))
            continue
        ok, reason, new_state = _verify_bundle(state, bundle, jump_to, params)
        if ok:
            return GetLedgerOutcome(accepted=True, state=new_state, source=pid,
                                    evidence=evidence)
        evidence.append((pid, reason))
    return GetLedgerOutcome(accepted=False, state=None, source=None,
                            reason="no_acceptable_chain", evidence=evidence)
