"""Committee and proposer selection, designated politicians, tx sharding.

Selection is driven by per-citizen VRFs so that any third party can check
membership from (vk, proof, seed, round) alone.  Designated-politician
selection and transaction sharding are hash-derived from public round data,
so every observer computes the same result with no coordination.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import crypto
from .crypto import KeyPair, VrfOutput

COOLOFF_BLOCKS = 40


@dataclass(frozen=True)
class CommitteeMember:
    vk: bytes
    vrf: VrfOutput


@dataclass(frozen=True)
class SafeSample:
    politicians: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.politicians)


def eligible_at(added_at_block: int, round_no: int,
                cooloff: int = COOLOFF_BLOCKS) -> bool:
    """Committee eligibility: an identity added at block b is eligible
    first at block b + cooloff."""
    return added_at_block + cooloff <= round_no


def committee_vrf(keypair: KeyPair, seed: bytes, round_no: int) -> VrfOutput:
    return crypto.compute_vrf(keypair, seed, round_no)


def is_member(vrf: VrfOutput, k_bits: int) -> bool:
    return crypto.sortition_member(vrf, k_bits)


def verify_membership(vk: bytes, vrf: VrfOutput, seed: bytes, round_no: int,
                      k_bits: int) -> bool:
    """Third-party committee check from public data only."""
    return crypto.verify_vrf(vk, seed, round_no, vrf) and crypto.sortition_member(vrf, k_bits)


def select_committee(registry: Iterable[tuple[bytes, KeyPair, int]], seed: bytes,
                     round_no: int, k_bits: int,
                     cooloff: int = COOLOFF_BLOCKS) -> list[CommitteeMember]:
    """Evaluate sortition for every registered identity.

    ``registry`` yields (vk, keypair, added_at_block); identities still in
    their cool-off window are excluded regardless of VRF.
    """
    members = []
    for vk, keypair, added_at in registry:
        if not eligible_at(added_at, round_no, cooloff):
            continue
        vrf = committee_vrf(keypair, seed, round_no)
        if is_member(vrf, k_bits):
            members.append(CommitteeMember(vk=vk, vrf=vrf))
    return members


def proposer_vrf(keypair: KeyPair, prev_hash: bytes, round_no: int) -> VrfOutput:
    return crypto.compute_vrf(keypair, prev_hash, round_no)


def select_proposers(committee: Sequence[CommitteeMember],
                     keypairs: dict[bytes, KeyPair], prev_hash: bytes,
                     round_no: int, kp_bits: int) -> list[tuple[bytes, VrfOutput]]:
    """Second sortition over the committee; result ordered by VRF value.

    The first element is the winner ("least VRF", byte-lexicographic, which
    is a total order; ties would need a 32-byte hash collision).
    """
    chosen = []
    for member in committee:
        vrf = proposer_vrf(keypairs[member.vk], prev_hash, round_no)
        if crypto.sortition_member(vrf, kp_bits):
            chosen.append((member.vk, vrf))
    chosen.sort(key=lambda t: t[1].value)
    return chosen


def _hash_stream(seed: bytes):
    counter = 0
    while True:
        yield hashlib.sha256(seed + counter.to_bytes(8, "big")).digest()
        counter += 1


def _stream_words(seed: bytes):
    for block in _hash_stream(seed):
        for off in range(0, 32, 8):
            yield int.from_bytes(block[off:off + 8], "big")


def designated_politicians(round_no: int, prev_hash: bytes, rho: int,
                           s_count: int) -> list[int]:
    """The rho politicians serving tx pools for this round.

    Deterministic partial Fisher-Yates shuffle seeded by
    hash(round || prev block hash); without replacement.
    """
    if rho > s_count:
        raise ValueError(f"rho={rho} exceeds politician count {s_count}")
    seed = hashlib.sha256(b"designated" + round_no.to_bytes(8, "big") + prev_hash).digest()
    pool = list(range(s_count))
    picks = []
    words = _stream_words(seed)
    for i in range(rho):
        remaining = s_count - i
        limit = (1 << 64) - ((1 << 64) % remaining)
        x = next(words)
        while x >= limit:
            x = next(words)
        j = i + (x % remaining)
        pool[i], pool[j] = pool[j], pool[i]
        picks.append(pool[i])
    return picks


def shard_transaction(originator_vk: bytes, round_no: int,
                      designated: Sequence[int]) -> int:
    """Politician (from the designated list) responsible for this
    originator's transactions in this round.

    Hashing the round number in means an originator maps to different
    designated slots across rounds, so its transactions eventually land
    with an honest politician.
    """
    if not designated:
        raise ValueError("designated list is empty")
    digest = hashlib.sha256(
        b"shard" + round_no.to_bytes(8, "big") + originator_vk
    ).digest()
    return designated[int.from_bytes(digest[:8], "big") % len(designated)]


def draw_safe_sample(rng: random.Random, s_count: int, m: int) -> SafeSample:
    """m distinct politicians drawn uniformly from the scenario RNG."""
    if m > s_count:
        raise ValueError(f"sample size {m} exceeds politician count {s_count}")
    return SafeSample(politicians=tuple(rng.sample(range(s_count), m)))
