"""Round-level protocol objects: pools, commitments, witness lists,
proposals, and the threshold commit tally.

A politician freezes its per-round transaction pool behind a signed
commitment; committee members witness which pools they could download;
proposers include only commitments whose witness count clears
``n_b_tilde + delta`` (so at least delta honest members hold the bytes);
and a block commits once one (block hash, state root) pair gathers
``t_star`` distinct committee signatures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from . import crypto
from .bounds import CommitteeBounds
from .crypto import KeyPair, VrfOutput
from .errors import InfeasibleConfig
from .ledger import CommitSignature, Transaction, _tx_bytes


@dataclass(frozen=True)
class TxPool:
    politician: int
    round_no: int
    txs: tuple[Transaction, ...]

    def digest(self) -> bytes:
        parts = [b"pool", self.politician.to_bytes(4, "big"),
                 self.round_no.to_bytes(8, "big")]
        parts.extend(_tx_bytes(t) for t in self.txs)
        return crypto.hash_bytes(b"".join(parts))


def commitment_message(pool_digest: bytes, round_no: int) -> bytes:
    return b"commitment" + pool_digest + round_no.to_bytes(8, "big")


@dataclass(frozen=True)
class Commitment:
    politician: int
    round_no: int
    pool_digest: bytes
    signature: bytes

    def verify(self, politician_vk: bytes) -> bool:
        return crypto.verify(politician_vk,
                             commitment_message(self.pool_digest, self.round_no),
                             self.signature)


def freeze_pool(keypair: KeyPair, politician: int, round_no: int,
                shard_txs: Sequence[Transaction], cap: int
                ) -> tuple[TxPool, Commitment]:
    """Freeze the politician's shard for this round (uuid order, capped).

    An empty shard still yields a valid (empty) pool and commitment.
    """
    txs = tuple(sorted(shard_txs, key=lambda t: t.uuid)[:cap])
    pool = TxPool(politician=politician, round_no=round_no, txs=txs)
    commitment = Commitment(
        politician=politician, round_no=round_no, pool_digest=pool.digest(),
        signature=crypto.sign(keypair, commitment_message(pool.digest(), round_no)))
    return pool, commitment


@dataclass(frozen=True)
class CommitmentEquivocation:
    """Two distinct signed commitments from one politician in one round."""

    first: Commitment
    second: Commitment

    def verify(self, politician_vk: bytes) -> bool:
        a, b = self.first, self.second
        return (a.politician == b.politician and a.round_no == b.round_no
                and a.pool_digest != b.pool_digest
                and a.verify(politician_vk) and b.verify(politician_vk))


def witness_message(round_no: int, slots: Sequence[Optional[Commitment]]) -> bytes:
    parts = [b"witness", round_no.to_bytes(8, "big")]
    for c in slots:
        parts.append(b"\x00" if c is None else b"\x01" + c.pool_digest)
    return crypto.hash_bytes(b"".join(parts))


@dataclass(frozen=True)
class WitnessList:
    citizen_vk: bytes
    round_no: int
    slots: tuple[Optional[Commitment], ...]
    signature: bytes
    vrf: VrfOutput

    def verify_signature(self) -> bool:
        return crypto.verify(self.citizen_vk,
                             witness_message(self.round_no, self.slots),
                             self.signature)


def make_witness_list(keypair: KeyPair, round_no: int,
                      slots: Sequence[Optional[Commitment]],
                      vrf: VrfOutput) -> WitnessList:
    return WitnessList(
        citizen_vk=keypair.verification_key, round_no=round_no,
        slots=tuple(slots),
        signature=crypto.sign(keypair, witness_message(round_no, slots)),
        vrf=vrf)


def proposal_message(round_no: int, id_list: Sequence[Commitment]) -> bytes:
    parts = [b"proposal", round_no.to_bytes(8, "big")]
    parts.extend(c.pool_digest for c in id_list)
    return crypto.hash_bytes(b"".join(parts))


@dataclass(frozen=True)
class Proposal:
    proposer_vk: bytes
    round_no: int
    vrf: VrfOutput
    id_list: tuple[Commitment, ...]
    signature: bytes

    def digest(self) -> bytes:
        return proposal_message(self.round_no, self.id_list)

    def verify_signature(self) -> bool:
        return crypto.verify(self.proposer_vk, self.digest(), self.signature)


def make_proposal(keypair: KeyPair, round_no: int, vrf: VrfOutput,
                  id_list: Sequence[Commitment]) -> Proposal:
    return Proposal(
        proposer_vk=keypair.verification_key, round_no=round_no, vrf=vrf,
        id_list=tuple(id_list),
        signature=crypto.sign(keypair, proposal_message(round_no, id_list)))


@dataclass(frozen=True)
class RoundParams:
    rho: int = 45
    delta: int = 350
    t_star: int = 850
    n_b_tilde: int = 772
    reupload_first: int = 5
    reupload_second: int = 10
    rw_allowance: int = 36
    proposer_bits: int = 3

    @property
    def witness_threshold(self) -> int:
        return self.n_b_tilde + self.delta

    def validate(self, n_g_star: int) -> None:
        """Commit-threshold window: bad-plus-fooled citizens cannot reach
        t_star and good-minus-fooled always can."""
        if not self.n_b_tilde + self.rw_allowance < self.t_star <= \
                n_g_star - self.rw_allowance:
            raise InfeasibleConfig(
                f"t_star={self.t_star} outside ({self.n_b_tilde + self.rw_allowance}, "
                f"{n_g_star - self.rw_allowance}]")
        if self.witness_threshold > n_g_star:
            raise InfeasibleConfig(
                f"witness threshold {self.witness_threshold} above the good-citizen "
                f"floor {n_g_star}: honest pools could never be proposed")


def derive_round_params(bounds: CommitteeBounds, rho: int,
                        reupload_first: int = 5, reupload_second: int = 10,
                        rw_allowance: Optional[int] = None,
                        delta: Optional[int] = None,
                        t_star: Optional[int] = None,
                        proposer_bits: int = 3) -> RoundParams:
    """Scale the round thresholds from computed committee bounds.

    Defaults put t_star mid-window and delta at the top of the witness
    window less a safety margin.
    """
    if rw_allowance is None:
        rw_allowance = max(1, round(36 * bounds.n_tilde / 2300))
    window = bounds.n_g_star - bounds.n_b_tilde
    if delta is None:
        delta = max(1, window - max(2 * rw_allowance, window // 8))
    if t_star is None:
        t_star = (bounds.n_b_tilde + bounds.n_g_star + 1) // 2
    params = RoundParams(rho=rho, delta=delta, t_star=t_star,
                         n_b_tilde=bounds.n_b_tilde,
                         reupload_first=reupload_first,
                         reupload_second=reupload_second,
                         rw_allowance=rw_allowance,
                         proposer_bits=proposer_bits)
    params.validate(bounds.n_g_star)
    return params


def count_witness_votes(witness_lists: Iterable[WitnessList], rho: int
                        ) -> list[dict[bytes, int]]:
    """Votes per designated slot, keyed by commitment digest."""
    votes: list[dict[bytes, int]] = [{} for _ in range(rho)]
    for wl in witness_lists:
        for i, c in enumerate(wl.slots[:rho]):
            if c is not None:
                votes[i][c.pool_digest] = votes[i].get(c.pool_digest, 0) + 1
    return votes


def select_commitments(witness_lists: Iterable[WitnessList], rho: int,
                       threshold: int,
                       blacklisted: frozenset[int] = frozenset()
                       ) -> list[Commitment]:
    """Honest proposer rule: commitments with at least ``threshold``
    witness votes, in designated-slot order; equivocators' slots are
    dropped entirely."""
    slot_commitments: list[dict[bytes, Commitment]] = [{} for _ in range(rho)]
    for wl in witness_lists:
        for i, c in enumerate(wl.slots[:rho]):
            if c is not None:
                slot_commitments[i][c.pool_digest] = c
    votes = count_witness_votes(witness_lists, rho)
    picked = []
    for i in range(rho):
        for digest, count in sorted(votes[i].items()):
            c = slot_commitments[i][digest]
            if count >= threshold and c.politician not in blacklisted:
                picked.append(c)
                break
    return picked


def find_equivocations(witness_lists: Iterable[WitnessList]
                       ) -> list[CommitmentEquivocation]:
    seen: dict[tuple[int, int], Commitment] = {}
    found: dict[tuple[int, int], CommitmentEquivocation] = {}
    for wl in witness_lists:
        for c in wl.slots:
            if c is None:
                continue
            key = (c.politician, c.round_no)
            prior = seen.get(key)
            if prior is None:
                seen[key] = c
            elif prior.pool_digest != c.pool_digest and key not in found:
                found[key] = CommitmentEquivocation(first=prior, second=c)
    return list(found.values())


@dataclass
class BlockCommitOutcome:
    height: int
    block_hash: bytes
    gs_root: bytes
    hash_subblock: bytes
    pools: int
    tx_count: int
    empty: bool
    consensus_rounds: int
    signature_count: int
    signatures: tuple[CommitSignature, ...]


@dataclass(frozen=True)
class SignedCommit:
    """A committee member's uploaded commit vote."""

    sig: CommitSignature
    hash_block: bytes
    gs_root: bytes
    hash_subblock: bytes


def tally_commit(commits: Iterable[SignedCommit], height: int, t_star: int,
                 ) -> Optional[tuple[tuple[bytes, bytes, bytes],
                                     tuple[CommitSignature, ...]]]:
    """The unique (block hash, root, sub-block hash) pair reaching t_star
    verified, per-signer-deduplicated signatures; None if no pair has."""
    groups: dict[tuple[bytes, bytes, bytes], dict[bytes, CommitSignature]] = {}
    for c in commits:
        if not c.sig.verify(c.hash_block, c.gs_root, c.hash_subblock, height):
            continue
        key = (c.hash_block, c.gs_root, c.hash_subblock)
        groups.setdefault(key, {})[c.sig.signer_vk] = c.sig
    winners = [(key, sigs) for key, sigs in groups.items() if len(sigs) >= t_star]
    if not winners:
        return None
    assert len(winners) == 1, "two pairs reached the commit threshold"
    key, sigs = winners[0]
    return key, tuple(sigs.values())
