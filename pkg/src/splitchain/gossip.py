"""Politician-to-politician dissemination of per-round transaction pools.

Small control messages (witness lists, proposals, votes) go by full
broadcast.  Pool payloads use the three-phase prioritized protocol: a
handshake advertises inventories, senders still missing pools favor peers
holding what they need (selfish phase), and completed senders favor peers
that claim the most (frugal phase), soft-penalizing nodes that claim
nothing.  Inventories may only grow within a round; an observed shrink is
blacklist evidence.

The engine is tick-driven: one tick is one event-loop round in which every
node performs at most one priority exchange, issues requests for missing
pools (at most ``k_outstanding`` per pool), and serves a bounded number of
queued requests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence


@dataclass
class PoolInventory:
    owner: int
    claimed: frozenset[int]


def pick_peer(missing: set[int], complete: bool,
              inventories: dict[int, frozenset[int]],
              self_id: int) -> Optional[int]:
    """Prioritized peer choice.

    Selfish phase (sender incomplete): peer claiming the most pools the
    sender needs.  Frugal phase (or nothing useful claimed): peer claiming
    the most overall.  Ties break to the lowest peer id.
    """
    candidates = [(pid, claims) for pid, claims in inventories.items()
                  if pid != self_id]
    if not candidates:
        return None
    if not complete:
        scored = [(len(claims & missing), -pid, pid) for pid, claims in candidates]
        best = max(scored)
        if best[0] > 0:
            return best[2]
    scored = [(len(claims), -pid, pid) for pid, claims in candidates]
    return max(scored)[2]


@dataclass
class GossipNodeState:
    node_id: int
    honest: bool
    held: set[int]
    sinkhole: bool = False
    up_bytes: int = 0
    down_bytes: int = 0
    complete_tick: Optional[int] = None
    up_at_honest_complete: Optional[int] = None
    # requester -> pools asked of us, served in priority order
    service_queue: list[tuple[int, int]] = field(default_factory=list)
    # pool -> list of (peer, expiry_tick)
    outstanding: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    # pool -> peers whose requests timed out (deprioritized on retry)
    request_failed: dict[int, set[int]] = field(default_factory=dict)

    def claimed(self) -> frozenset[int]:
        if self.sinkhole:
            return frozenset()
        return frozenset(self.held)


@dataclass
class GossipReport:
    ticks: int
    honest_complete_tick: Optional[int]
    nodes: dict[int, GossipNodeState]
    evidence: list[tuple[int, int]]  # (offender, tick)

    def honest_uploads_at_completion(self) -> list[int]:
        return [s.up_at_honest_complete if s.up_at_honest_complete is not None
                else s.up_bytes
                for s in self.nodes.values() if s.honest]


class PrioritizedGossip:
    def __init__(self, nodes: Sequence[GossipNodeState], n_pools: int,
                 pool_size: int, k_outstanding: int = 5,
                 request_timeout: int = 3, service_quota: int = 2):
        self.nodes = {s.node_id: s for s in nodes}
        self.order = sorted(self.nodes)
        self.n_pools = n_pools
        self.pool_size = pool_size
        self.k_outstanding = k_outstanding
        self.request_timeout = request_timeout
        self.service_quota = service_quota
        self.tick_no = 0
        self.evidence: list[tuple[int, int]] = []
        self._prev_claims: dict[int, frozenset[int]] = {}
        # Pools any honest node holds at start must reach every honest node.
        self.available = set()
        for s in nodes:
            if s.honest:
                self.available |= s.held

    def _transfer(self, src: int, dst: int, pool: int) -> None:
        a, b = self.nodes[src], self.nodes[dst]
        a.up_bytes += self.pool_size
        b.down_bytes += self.pool_size
        if pool not in b.held:
            b.held.add(pool)
            b.outstanding.pop(pool, None)

    def _snapshot_claims(self) -> dict[int, frozenset[int]]:
        claims = {}
        for nid in self.order:
            c = self.nodes[nid].claimed()
            prev = self._prev_claims.get(nid)
            if prev is not None and not c >= prev:
                self.evidence.append((nid, self.tick_no))
            self._prev_claims[nid] = c
            claims[nid] = c
        return claims

    def _needs(self, state: GossipNodeState) -> set[int]:
        if state.honest:
            return self.available - state.held
        return set(range(self.n_pools)) - state.held

    def tick(self) -> None:
        self.tick_no += 1
        claims = self._snapshot_claims()

        # Priority exchange: one pool each way per sender per tick.
        for nid in self.order:
            state = self.nodes[nid]
            if not state.honest:
                continue  # adversarial nodes never volunteer payload
            missing = self._needs(state)
            peer_id = pick_peer(missing, not missing, claims, nid)
            if peer_id is None:
                continue
            peer = self.nodes[peer_id]
            give = sorted(state.held - claims[peer_id])
            if give:
                self._transfer(nid, peer_id, give[0])
            if peer.honest:
                back = sorted((peer.held & missing))
                if back:
                    self._transfer(peer_id, nid, back[0])

        # Requests for missing pools: top up to k outstanding per pool;
        # peers that let a request time out fall to the back of the order.
        for nid in self.order:
            state = self.nodes[nid]
            for pool in sorted(self._needs(state)):
                slots = state.outstanding.setdefault(pool, [])
                expired = [p for p, exp in slots if exp <= self.tick_no]
                if expired:
                    state.request_failed.setdefault(pool, set()).update(expired)
                    slots[:] = [(p, exp) for p, exp in slots if exp > self.tick_no]
                tried = {p for p, _ in slots}
                failed = state.request_failed.get(pool, set())
                holders = [pid for pid in self.order
                           if pid != nid and pid not in tried
                           and pool in claims[pid]]
                if state.sinkhole:
                    # claim-nothing/request-all: hammer every holder
                    holders = [pid for pid in self.order
                               if pid != nid and pid not in tried
                               and pool in self.nodes[pid].held]
                if holders and all(p in failed for p in holders):
                    failed.clear()  # everyone failed once: start a new cycle
                holders.sort(key=lambda p: (p in failed, -len(claims[p]), p))
                while len(slots) < self.k_outstanding and holders:
                    target = holders.pop(0)
                    slots.append((target, self.tick_no + self.request_timeout))
                    self.nodes[target].service_queue.append((nid, pool))

        # Serve queued requests, highest-claiming requesters first.
        for nid in self.order:
            state = self.nodes[nid]
            if not state.honest:
                state.service_queue.clear()  # silent drop
                continue
            state.service_queue.sort(key=lambda rq: (-len(claims[rq[0]]), rq[0]))
            served = 0
            remaining = []
            for requester, pool in state.service_queue:
                if served >= self.service_quota:
                    remaining.append((requester, pool))
                    continue
                if pool in state.held and pool not in self.nodes[requester].held:
                    self._transfer(nid, requester, pool)
                    served += 1
            state.service_queue = remaining

        for nid in self.order:
            state = self.nodes[nid]
            if state.honest and state.complete_tick is None and \
                    self.available <= state.held:
                state.complete_tick = self.tick_no

    def honest_complete(self) -> bool:
        return all(self.available <= s.held
                   for s in self.nodes.values() if s.honest)

    def run(self, max_ticks: int = 200) -> GossipReport:
        honest_done: Optional[int] = None
        while not self.honest_complete() and self.tick_no < max_ticks:
            self.tick()
            if honest_done is None and self.honest_complete():
                honest_done = self.tick_no
                for s in self.nodes.values():
                    s.up_at_honest_complete = s.up_bytes
        if honest_done is None and self.honest_complete():
            honest_done = self.tick_no
            for s in self.nodes.values():
                s.up_at_honest_complete = s.up_bytes
        return GossipReport(ticks=self.tick_no, honest_complete_tick=honest_done,
                            nodes=self.nodes, evidence=self.evidence)


def full_broadcast_bytes(message_size: int, s_count: int) -> int:
    """Upload cost of one politician broadcasting to all others."""
    return message_size * (s_count - 1)
