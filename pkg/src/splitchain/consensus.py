"""Committee agreement on the winning proposal digest.

String consensus is reduced to one binary agreement instance by a two-step
graded broadcast: members exchange inputs, echo any value seen past the
(n+t)/2 majority threshold, and enter the bit protocol with 1 iff some
candidate was echoed by at least 2t+1 members.  The bit protocol is the
three-step loop with a common coin (coin-fixed-to-0, coin-fixed-to-1,
coin-genuinely-flipped); decisions require more than 2n/3 matching step
votes, so conflicting supermajorities are impossible for t < n/3 even
under split deliveries.  The coin is the low bit of
hash(coin seed || round) -- publicly computable, adequate for adversaries
fixed before the round, weaker than a cryptographic coin.

Transport is step-synchronous.  In union-delivery mode (vote gossip) every
member receives the same vote set, equivocating voters are dropped with
evidence; raw split delivery by recipient parity is kept for stress tests.
A decided member keeps voting its decision so late counters stay sound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

from . import crypto
from .crypto import KeyPair

NO_CANDIDATE = "?"
_ABSENT = object()

Payload = object  # bytes | None (the NULL proposal) | NO_CANDIDATE | int bits


def _payload_bytes(payload) -> bytes:
    if payload is None:
        return b"\x00"
    if isinstance(payload, str):
        return b"\x02" + payload.encode()
    if isinstance(payload, int):
        return b"\x03" + bytes([payload])
    return b"\x01" + payload


def _payload_order(payload):
    return (0, b"") if payload is None else (1, _payload_bytes(payload))


def vote_message(step: str, payload) -> bytes:
    return b"vote" + step.encode() + b"|" + _payload_bytes(payload)


def decision_threshold(n: int) -> int:
    """Smallest count strictly above 2n/3."""
    return (2 * n) // 3 + 1


def property1_threshold(n: int) -> int:
    return -((n - 1) // -3)  # ceil((n-1)/3)


@dataclass
class EquivocationEvidence:
    voter: int
    step: str
    payloads: tuple
    signatures: tuple = ()

    def verify(self, vk: bytes) -> bool:
        if len(self.signatures) != len(self.payloads) or len(self.payloads) < 2:
            return False
        return all(
            crypto.verify(vk, vote_message(self.step, p), s)
            for p, s in zip(self.payloads, self.signatures)
        ) and len({_payload_bytes(p) for p in self.payloads}) > 1


@dataclass
class StepRecord:
    name: str
    votes_honest: dict[int, Payload]
    votes_adversary: dict
    coin: Optional[int] = None


@dataclass
class ConsensusResult:
    output: Payload
    outputs: dict[int, Payload]
    inputs: dict[int, Payload]
    honest_ids: tuple[int, ...]
    bba_rounds: int
    total_steps: int
    steps: list[StepRecord] = field(default_factory=list)
    evidence: list[EquivocationEvidence] = field(default_factory=list)
    terminated: bool = True

    def agreement_holds(self) -> bool:
        outs = {_payload_bytes(self.outputs[i]) for i in self.honest_ids}
        return len(outs) <= 1

    def honest_matching_output(self) -> int:
        return sum(1 for i in self.honest_ids
                   if _payload_bytes(self.inputs[i]) == _payload_bytes(self.output))


class ConsensusAdversary(Protocol):
    def votes(self, step: str, honest_votes: Mapping[int, Payload],
              corrupt_ids: Sequence[int], context: dict) -> Mapping: ...


def audit_property1(result: ConsensusResult, n: int) -> bool:
    """Non-NULL output must have been the input of >= ceil((n-1)/3) honest
    members; NULL outputs carry no obligation."""
    if result.output is None:
        return True
    return result.honest_matching_output() >= property1_threshold(n)


class _Counts:
    __slots__ = ("counts", "values")

    def __init__(self):
        self.counts: dict[bytes, int] = {}
        self.values: dict[bytes, Payload] = {}

    def add(self, payload) -> None:
        pb = _payload_bytes(payload)
        self.counts[pb] = self.counts.get(pb, 0) + 1
        self.values[pb] = payload

    def count_of(self, payload) -> int:
        return self.counts.get(_payload_bytes(payload), 0)

    def clone(self) -> "_Counts":
        c = _Counts()
        c.counts = dict(self.counts)
        c.values = dict(self.values)
        return c


class _Engine:
    def __init__(self, honest_ids, corrupt_ids, coin_seed, t, adversary,
                 keypairs, union_delivery):
        self.honest_ids = sorted(honest_ids)
        self.corrupt_ids = sorted(corrupt_ids)
        self.n = len(self.honest_ids) + len(self.corrupt_ids)
        self.t = t
        self.coin_seed = coin_seed
        self.adversary = adversary
        self.keypairs = keypairs or {}
        self.union_delivery = union_delivery
        self.steps: list[StepRecord] = []
        self.evidence: list[EquivocationEvidence] = []
        self.step_count = 0

    def coin(self, round_no: int) -> int:
        return crypto.hash_bytes(
            b"coin" + self.coin_seed + round_no.to_bytes(8, "big"))[-1] & 1

    def _sign(self, voter: int, step: str, payload) -> Optional[bytes]:
        kp = self.keypairs.get(voter)
        if kp is None:
            return None
        return crypto.sign(kp, vote_message(step, payload))

    def exchange(self, step: str, honest_votes: dict[int, Payload],
                 context: dict, coin: Optional[int] = None
                 ) -> dict[int, _Counts]:
        """One vote step; returns the counts each honest member receives."""
        self.step_count += 1
        adv_votes: dict = {}
        if self.adversary is not None and self.corrupt_ids:
            adv_votes = dict(self.adversary.votes(step, dict(honest_votes),
                                                  tuple(self.corrupt_ids), context))
        self.steps.append(StepRecord(name=step, votes_honest=dict(honest_votes),
                                     votes_adversary=adv_votes, coin=coin))

        base = _Counts()
        for payload in honest_votes.values():
            base.add(payload)

        # Resolve adversary votes into per-class payloads (or drops).
        per_class: dict[int, tuple] = {}
        split_seen = False
        for voter in self.corrupt_ids:
            v = adv_votes.get(voter, _ABSENT)
            if v is _ABSENT:
                continue
            if isinstance(v, dict):
                pair = (v.get(0, _ABSENT), v.get(1, _ABSENT))
            else:
                pair = (v, v)
            distinct = {_payload_bytes(p) for p in pair if p is not _ABSENT}
            if self.union_delivery and len(distinct) > 1:
                # Gossip carries both signed votes to everyone: the voter is
                # dropped for the step and the pair is equivocation evidence.
                payloads = tuple(p for p in pair if p is not _ABSENT)
                sigs = tuple(self._sign(voter, step, p) for p in payloads)
                self.evidence.append(EquivocationEvidence(
                    voter=voter, step=step, payloads=payloads,
                    signatures=sigs if all(sigs) else ()))
                continue
            per_class[voter] = pair
            uneven = (pair[0] is _ABSENT) != (pair[1] is _ABSENT)
            if not self.union_delivery and (uneven or len(distinct) > 1):
                split_seen = True

        if not split_seen:
            shared = base
            for voter, pair in per_class.items():
                p = pair[0] if pair[0] is not _ABSENT else pair[1]
                if p is not _ABSENT:
                    shared.add(p)
            return {i: shared for i in self.honest_ids}

        by_class = {0: base.clone(), 1: base.clone()}
        for voter, pair in per_class.items():
            for cls in (0, 1):
                if pair[cls] is not _ABSENT:
                    by_class[cls].add(pair[cls])
        return {i: by_class[i % 2] for i in self.honest_ids}


def _best_candidate(received: _Counts):
    """Most frequent non-'?' payload; ties break on payload order."""
    best = None
    best_count = 0
    for pb, count in received.counts.items():
        payload = received.values[pb]
        if payload == NO_CANDIDATE:
            continue
        if count > best_count or (
                count == best_count and best_count > 0 and
                _payload_order(payload) < _payload_order(best)):
            best = payload
            best_count = count
    return best, best_count


def _run_bba(engine: _Engine, bits: dict[int, int], context: dict,
             max_rounds: int) -> tuple[dict[int, int], int, bool]:
    """Three-step binary agreement loop; returns (decisions, rounds, done)."""
    decided: dict[int, int] = {}
    thresh = decision_threshold(engine.n)
    rounds = 0

    def step(name: str, ctx: dict, decide_bit: Optional[int],
             fallback, coin: Optional[int] = None) -> None:
        votes = {i: decided.get(i, bits[i]) for i in engine.honest_ids}
        recv = engine.exchange(name, votes, ctx, coin=coin)
        for i in engine.honest_ids:
            if i in decided:
                continue
            zeros = recv[i].count_of(0)
            ones = recv[i].count_of(1)
            if zeros >= thresh:
                bits[i] = 0
                if decide_bit == 0:
                    decided[i] = 0
            elif ones >= thresh:
                bits[i] = 1
                if decide_bit == 1:
                    decided[i] = 1
            else:
                bits[i] = fallback(i)

    for r in range(max_rounds):
        rounds = r + 1
        step(f"bba{r}.0", {**context, "phase": 0, "round": r}, 0, lambda i: 0)
        if len(decided) == len(engine.honest_ids):
            return decided, rounds, True
        step(f"bba{r}.1", {**context, "phase": 1, "round": r}, 1, lambda i: 1)
        if len(decided) == len(engine.honest_ids):
            return decided, rounds, True
        coin = engine.coin(r)
        step(f"bba{r}.c", {**context, "phase": 2, "round": r, "coin": coin},
             None, lambda i: coin, coin=coin)
        if len(decided) == len(engine.honest_ids):
            return decided, rounds, True
    return decided, rounds, len(decided) == len(engine.honest_ids)


def _finish_undecided(decided, honest_ids, bits) -> dict[int, int]:
    # Safety valve for capped runs: undecided members answer their current
    # bit; `terminated` records that the cap was hit so tests can flag it.
    out = dict(decided)
    for i in honest_ids:
        out.setdefault(i, bits[i])
    return out


def bba_bit_consensus(honest_bits: Mapping[int, int], corrupt_ids: Sequence[int],
                      coin_seed: bytes, t: Optional[int] = None,
                      adversary: Optional[ConsensusAdversary] = None,
                      keypairs: Optional[Mapping[int, KeyPair]] = None,
                      union_delivery: bool = True,
                      max_rounds: int = 40) -> ConsensusResult:
    """Binary agreement on bit inputs: agreement plus bit validity."""
    honest_ids = sorted(honest_bits)
    n = len(honest_ids) + len(corrupt_ids)
    t = (n - 1) // 3 if t is None else t
    engine = _Engine(honest_ids, corrupt_ids, coin_seed, t, adversary,
                     keypairs, union_delivery)
    bits = dict(honest_bits)
    decided, rounds, done = _run_bba(engine, bits, {"stage": "bba"}, max_rounds)
    decided = _finish_undecided(decided, honest_ids, bits)
    counts = sorted(decided[i] for i in honest_ids)
    majority = counts[len(counts) // 2] if counts else None
    return ConsensusResult(
        output=majority,
        outputs={i: decided[i] for i in honest_ids},
        inputs=dict(honest_bits),
        honest_ids=tuple(honest_ids), bba_rounds=rounds,
        total_steps=engine.step_count, steps=engine.steps,
        evidence=engine.evidence, terminated=done)


def run_string_consensus(inputs: Mapping[int, Payload], corrupt_ids: Sequence[int],
                         coin_seed: bytes, t: Optional[int] = None,
                         adversary: Optional[ConsensusAdversary] = None,
                         keypairs: Optional[Mapping[int, KeyPair]] = None,
                         union_delivery: bool = True,
                         max_rounds: int = 40) -> ConsensusResult:
    """Agreement on a proposal digest (or NULL) among committee members.

    Guarantees at t < n/3: agreement across honest members; validity for
    unanimous honest inputs; and any non-NULL output was the input of at
    least ceil((n-1)/3) honest members.
    """
    honest_ids = sorted(inputs)
    n = len(honest_ids) + len(corrupt_ids)
    t = (n - 1) // 3 if t is None else t
    engine = _Engine(honest_ids, corrupt_ids, coin_seed, t, adversary,
                     keypairs, union_delivery)
    hi_threshold = (n + t) // 2 + 1

    recv = engine.exchange("tc1", dict(inputs), {"stage": "tc1"})
    echo: dict[int, Payload] = {}
    for i in honest_ids:
        echo[i] = NO_CANDIDATE
        for pb, count in recv[i].counts.items():
            value = recv[i].values[pb]
            if count >= hi_threshold and value != NO_CANDIDATE:
                echo[i] = value
                break

    recv = engine.exchange("tc2", echo, {"stage": "tc2"})
    candidate: dict[int, Payload] = {}
    bits: dict[int, int] = {}
    for i in honest_ids:
        best, best_count = _best_candidate(recv[i])
        candidate[i] = best if best_count > 0 else NO_CANDIDATE
        bits[i] = 1 if best_count >= 2 * t + 1 else 0

    decided, rounds, done = _run_bba(engine, bits, {"stage": "bba"}, max_rounds)
    decided = _finish_undecided(decided, honest_ids, bits)

    outputs: dict[int, Payload] = {}
    for i in honest_ids:
        if decided[i] == 1 and candidate[i] != NO_CANDIDATE:
            outputs[i] = candidate[i]
        else:
            outputs[i] = None
    out_bytes = sorted(_payload_bytes(outputs[i]) for i in honest_ids)
    majority_pb = out_bytes[len(out_bytes) // 2] if out_bytes else b"\x00"
    output = next((outputs[i] for i in honest_ids
                   if _payload_bytes(outputs[i]) == majority_pb), None)
    return ConsensusResult(
        output=output, outputs=outputs, inputs=dict(inputs),
        honest_ids=tuple(honest_ids), bba_rounds=rounds,
        total_steps=engine.step_count, steps=engine.steps,
        evidence=engine.evidence, terminated=done)


# -- reference adversaries ---------------------------------------------------


class SilentAdversary:
    def votes(self, step, honest_votes, corrupt_ids, context):
        return {}


class SplitVoteAdversary:
    """Sends different payloads to even and odd recipients (raw delivery);
    under union delivery the same schedule surfaces as equivocation."""

    def __init__(self, value_a, value_b):
        self.value_a = value_a
        self.value_b = value_b

    def votes(self, step, honest_votes, corrupt_ids, context):
        if step.startswith("bba"):
            return {v: {0: 0, 1: 1} for v in corrupt_ids}
        return {v: {0: self.value_a, 1: self.value_b} for v in corrupt_ids}


class DelayMaximizer:
    """Vote-schedule heuristic maximizing bit-agreement rounds.

    Per bit step it tries the honest minority bit, all-zero, and all-one,
    and plays the first schedule whose one-step lookahead leaves honest
    members undecided.  In the graded-broadcast steps it votes NULL,
    pushing toward the empty block without ever lending a proposal votes
    it lacks honest backing for.
    """

    def __init__(self, n: int):
        self.n = n

    def votes(self, step, honest_votes, corrupt_ids, context):
        if not step.startswith("bba"):
            return {v: None for v in corrupt_ids}
        ones = sum(1 for v in honest_votes.values() if v == 1)
        zeros = len(honest_votes) - ones
        thresh = decision_threshold(self.n)
        phase = context.get("phase", 0)
        n_c = len(corrupt_ids)
        minority = 0 if ones >= zeros else 1
        for bit in (minority, 0, 1):
            total_zero = zeros + (n_c if bit == 0 else 0)
            total_one = ones + (n_c if bit == 1 else 0)
            decides = (phase == 0 and total_zero >= thresh) or \
                      (phase == 1 and total_one >= thresh)
            if not decides:
                return {v: bit for v in corrupt_ids}
        return {v: minority for v in corrupt_ids}
