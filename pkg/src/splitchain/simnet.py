"""Deterministic discrete-event simulation of full block-commit rounds.

One Simulation owns the population (seeded keypairs, corrupt sets), the
canonical chain store held by honest politicians, and per-round execution
of the commit protocol: committee sortition, local-state sync, pool
freezing and witness lists, re-uploads and prioritized gossip, proposals,
consensus, sampled global-state read/write, and the threshold tally.

Adversarial behavior is confined to strategy wrappers around what corrupt
nodes serve or sign; honest nodes never run strategy code.  Everything is
driven by named RNG streams derived from the scenario seed, so a given
(config, seed) reproduces identical metrics and an identical chain dump.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import crypto, sortition
from .chain import ChainParams, ChainStore, HonestLedgerView, StaleLedgerView
from .commit import (
    Commitment,
    Proposal,
    RoundParams,
    SignedCommit,
    TxPool,
    count_witness_votes,
    find_equivocations,
    freeze_pool,
    make_proposal,
    make_witness_list,
    select_commitments,
    tally_commit,
)
from .config import SimConfig
from .consensus import DelayMaximizer, run_string_consensus, property1_threshold
from .crypto import KeyPair
from .errors import SimulationInvariantError, StalledRound
from .gossip import GossipNodeState, PrioritizedGossip, full_broadcast_bytes
from .gsproto import (
    ReadParams,
    SessionMeter,
    TreeReadProvider,
    TreeUpdateProvider,
    WriteParams,
    gs_read,
    gs_update,
)
from .ledger import (
    GetLedgerParams,
    LocalState,
    balance_key,
    build_block,
    get_ledger,
    make_identity,
    make_transaction,
    nonce_key,
    referenced_keys,
    sign_commit,
    Identity,
    Transaction,
)
from .metrics import SCHEMA_VERSION, BlockMetricsRecord, percentile
from .smt import SparseMerkleTree, delta_apply
from .sortition import draw_safe_sample, designated_politicians, shard_transaction

TX_WIRE_BYTES = 100
COMMITMENT_WIRE = 108
WITNESS_SLOT_WIRE = 33
VRF_WIRE = 96
SIG_WIRE = 96
MEMBERSHIP_WIRE = 128
IDENTITY_WIRE = 224
VOTE_WIRE = 100


@dataclass
class CitizenNode:
    cid: int
    keypair: KeyPair
    identity: Identity
    corrupt: bool
    local: LocalState


@dataclass
class PoliticianNode:
    pid: int
    keypair: KeyPair
    corrupt: bool
    strategies: frozenset[str] = frozenset()

    def has(self, strategy: str) -> bool:
        return self.corrupt and strategy in self.strategies


class DropLedgerView:
    def claimed_height(self) -> int:
        return 0

    def ledger_bundle(self, from_height: int, to_height: int):
        return None


class _ControlledOnly:
    """Restricts an adversary's vote schedule to the truly corrupt ids
    (silent-but-honest members stay silent)."""

    def __init__(self, inner, controlled: set[int]):
        self.inner = inner
        self.controlled = controlled

    def votes(self, step, honest_votes, corrupt_ids, context):
        usable = tuple(v for v in corrupt_ids if v in self.controlled)
        if not usable:
            return {}
        return self.inner.votes(step, honest_votes, usable, context)


class DropReadProvider:
    """Serves nothing useful on reads (silence modeled as null data)."""

    def get_values(self, keys):
        return [None for _ in keys]

    def get_paths(self, keys):
        return []

    def exception_list(self, bucket_digests):
        return []

    def bucket_values(self, indices):
        return {}


class SplitViewReadProvider(TreeReadProvider):
    """Serves wrong values for a few keys (paths stay honest, so the lie is
    detectable and correctable)."""

    def __init__(self, tree, keys, params, corrupt_keys):
        super().__init__(tree, keys, params)
        self.corrupt_keys = set(corrupt_keys)
        self._own = None

    def get_values(self, keys):
        out = []
        for k in keys:
            v = self.tree.get(k)
            if k in self.corrupt_keys:
                v = bytes(b ^ 0xFF for b in v) if v else b"\xde\xad\xbe\xef"
            out.append(v)
        return out


class DropUpdateProvider:
    def get_frontier(self):
        from .smt import FrontierSlice
        return FrontierSlice(0, ())

    def get_bundles(self, indices):
        return {}


class SplitViewUpdateProvider(TreeUpdateProvider):
    def __init__(self, base, delta, level, corrupt_indices):
        super().__init__(base, delta, level)
        self.corrupt = set(corrupt_indices)

    def get_frontier(self):
        fr = super().get_frontier()
        nodes = list(fr.nodes)
        for i in self.corrupt:
            if i < len(nodes):
                flip = bytearray(nodes[i])
                flip[0] ^= 0xFF
                nodes[i] = bytes(flip)
        return type(fr)(fr.level, tuple(nodes))


@dataclass
class RoundStats:
    height: int
    committee_size: int
    corrupt_members: int
    synced_good: int
    empty: bool
    pools: int
    tx_count: int
    consensus_rounds: int
    signature_count: int
    output_null: bool
    proposer_corrupt: bool
    honest_winner_null_entries: int
    property1_ok: bool
    gossip_complete: bool
    gossip_honest_uploads: list[int]
    incorrect_reads: int
    incorrect_updates: int
    evidence_count: int
    abstained_good: int


@dataclass
class SimReport:
    config: SimConfig
    records: list[BlockMetricsRecord]
    rounds: list[RoundStats]
    store: ChainStore
    max_commit_delay: int
    unreaped_early_txs: int
    total_injected: int
    total_committed: int
    sim_time_us: int

    @property
    def empty_fraction(self) -> float:
        if not self.rounds:
            return 0.0
        return sum(1 for r in self.rounds if r.empty) / len(self.rounds)

    @property
    def mean_pools(self) -> float:
        if not self.rounds:
            return 0.0
        return sum(r.pools for r in self.rounds) / len(self.rounds)


class Simulation:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.bounds, self.round_params = config.validate()
        crypto.clear_caches()
        self.seed_bytes = config.seed.to_bytes(8, "big")

        self.read_params = ReadParams(mu=config.read_mu, tau=config.read_tau,
                                      buckets=config.read_buckets)
        self.write_params = WriteParams(frontier_level=config.write_frontier_level,
                                        checks=config.write_checks,
                                        tau=config.write_tau)

        self.registrar = KeyPair.from_seed(self._derive(b"registrar"))
        self._build_population()
        self._build_genesis()

        self.pending: dict[bytes, Transaction] = {}
        self.inject_round: dict[bytes, int] = {}
        self.gen_nonces = {a: 0 for a in range(config.accounts)}
        self.account_cursor = 0
        self.max_commit_delay = 0
        self.total_injected = 0
        self.total_committed = 0
        self.sim_time_us = 0
        self.prev_tree: Optional[SparseMerkleTree] = None
        self.records: list[BlockMetricsRecord] = []
        self.rounds: list[RoundStats] = []
        self._identity_counter = 0
        self._used_tks = {c.identity.tk for c in self.citizens}

    # -- deterministic randomness ------------------------------------------

    def _derive(self, tag: bytes) -> bytes:
        return hashlib.sha256(b"splitchain" + self.seed_bytes + tag).digest()

    def rng(self, tag: str) -> random.Random:
        return random.Random(int.from_bytes(self._derive(tag.encode()), "big"))

    # -- setup ---------------------------------------------------------------

    def _build_population(self) -> None:
        cfg = self.cfg
        self.citizens: list[CitizenNode] = []
        for cid in range(cfg.citizens):
            kp = KeyPair.from_seed(self._derive(b"citizen%d" % cid))
            ident = make_identity(self.registrar, b"tee%d" % cid, kp)
            ident = Identity(tk=ident.tk, cert_tk=ident.cert_tk, vk=ident.vk,
                             cert_vk=ident.cert_vk,
                             added_at_block=-cfg.cooloff)
            self.citizens.append(CitizenNode(cid=cid, keypair=kp, identity=ident,
                                             corrupt=False, local=None))
        n_corrupt_c = round(cfg.citizens * cfg.corrupt_citizen_frac)
        for cid in self.rng("corrupt_citizens").sample(range(cfg.citizens),
                                                       n_corrupt_c):
            self.citizens[cid].corrupt = True

        strategies = frozenset(cfg.politician_strategies)
        self.politicians: list[PoliticianNode] = []
        n_corrupt_p = round(cfg.politicians * cfg.corrupt_politician_frac)
        corrupt_p = set(self.rng("corrupt_politicians").sample(
            range(cfg.politicians), n_corrupt_p))
        for pid in range(cfg.politicians):
            kp = KeyPair.from_seed(self._derive(b"politician%d" % pid))
            self.politicians.append(PoliticianNode(
                pid=pid, keypair=kp, corrupt=pid in corrupt_p,
                strategies=strategies if pid in corrupt_p else frozenset()))
        self.citizen_strategies = frozenset(cfg.citizen_strategies)

    def _build_genesis(self) -> None:
        cfg = self.cfg
        items = {}
        for acct in range(cfg.accounts):
            items[balance_key(acct)] = (10**6).to_bytes(4, "big")
            items[nonce_key(acct)] = (0).to_bytes(4, "big")
        params = ChainParams(depth=cfg.depth, theta=cfg.theta,
                             hash_len=cfg.hash_len, k_bits=cfg.sortition_bits,
                             t_star=self.round_params.t_star,
                             cooloff=cfg.cooloff)
        self.store = ChainStore(params, self.registrar.verification_key,
                                [c.identity for c in self.citizens], items)
        for c in self.citizens:
            c.local = self.store.genesis_local_state()

    # -- workload ------------------------------------------------------------

    def _inject_transactions(self, round_no: int) -> None:
        cfg = self.cfg
        rng = self.rng(f"workload.{round_no}")
        for _ in range(cfg.tx_rate):
            acct = self.account_cursor % cfg.accounts
            self.account_cursor += 1
            credit = (acct + 1 + rng.randrange(cfg.accounts - 1)) % cfg.accounts
            nonce = self.gen_nonces[acct] + 1
            self.gen_nonces[acct] = nonce
            tx = make_transaction(self.citizens[acct].keypair, nonce,
                                  balance_key(acct), balance_key(credit), 1)
            self.pending[tx.uuid] = tx
            self.inject_round[tx.uuid] = round_no
            self.total_injected += 1

    def _new_identities(self, round_no: int) -> list[Identity]:
        out = []
        for _ in range(self.cfg.new_identities_per_block):
            i = self._identity_counter
            self._identity_counter += 1
            kp = KeyPair.from_seed(self._derive(b"newcomer%d" % i))
            out.append(make_identity(self.registrar, b"new-tee%d" % i, kp))
        return out

    # -- per-round byte meters ------------------------------------------------

    def _reset_meters(self) -> None:
        self.cit_up = {}
        self.cit_down = {}
        self.pol_up = {}
        self.pol_down = {}
        self.phase_cit_max = 0
        self.phase_pol_max = 0

    def charge_citizen(self, cid: int, up: int = 0, down: int = 0) -> None:
        self.cit_up[cid] = self.cit_up.get(cid, 0) + up
        self.cit_down[cid] = self.cit_down.get(cid, 0) + down
        self.phase_cit_max = max(self.phase_cit_max, up + down)

    def charge_politician(self, pid: int, up: int = 0, down: int = 0) -> None:
        self.pol_up[pid] = self.pol_up.get(pid, 0) + up
        self.pol_down[pid] = self.pol_down.get(pid, 0) + down
        self.phase_pol_max = max(self.phase_pol_max, up + down)

    def _phase_time(self, round_no: int, phase: str, hops: int = 2) -> int:
        cfg = self.cfg
        rng = self.rng(f"latency.{round_no}.{phase}")
        latency_us = rng.randint(cfg.latency_min_ms * 1000,
                                 cfg.latency_max_ms * 1000) * hops
        cit_us = self.phase_cit_max * 1_000_000 // cfg.citizen_rate
        pol_us = self.phase_pol_max * 1_000_000 // cfg.politician_rate
        self.phase_cit_max = 0
        self.phase_pol_max = 0
        return latency_us + cit_us + pol_us

    # -- round execution -------------------------------------------------------

    def run(self) -> SimReport:
        for n in range(1, self.cfg.blocks + 1):
            self._run_round(n)
        early_cutoff = max(1, int(self.cfg.blocks * 0.4))
        unreaped = sum(1 for uuid in self.pending
                       if self.inject_round[uuid] <= early_cutoff)
        return SimReport(
            config=self.cfg, records=self.records, rounds=self.rounds,
            store=self.store, max_commit_delay=self.max_commit_delay,
            unreaped_early_txs=unreaped, total_injected=self.total_injected,
            total_committed=self.total_committed, sim_time_us=self.sim_time_us)

    def _select_committee(self, round_no: int) -> list[tuple[int, object]]:
        seed = self.store.seed_for_round(round_no)
        members = []
        for c in self.citizens:
            if not sortition.eligible_at(c.identity.added_at_block, round_no,
                                         self.cfg.cooloff):
                continue
            vrf = sortition.committee_vrf(c.keypair, seed, round_no)
            if sortition.is_member(vrf, self.cfg.sortition_bits):
                members.append((c.cid, vrf))
        return members

    def _sync_member(self, cid: int, round_no: int, sample,
                     ledger_params: GetLedgerParams) -> bool:
        """Bring a member's local state to height round_no - 1."""
        node = self.citizens[cid]
        views = {}
        for pid in sample.politicians:
            pol = self.politicians[pid]
            if pol.has("staleness"):
                views[pid] = StaleLedgerView(self.store, self.cfg.stale_lag)
            elif pol.has("drop"):
                views[pid] = DropLedgerView()
            else:
                views[pid] = HonestLedgerView(self.store)
        target = round_no - 1
        while node.local.height < target:
            out = get_ledger(node.local, views, ledger_params, target=target)
            if not out.accepted:
                return False
            jump = out.state.height - node.local.height
            idents = sum(len(self.store.blocks[h].subblock.new_identities)
                         for h in range(node.local.height + 1,
                                        out.state.height + 1))
            size = (ledger_params.t_star * (SIG_WIRE + MEMBERSHIP_WIRE)
                    + jump * 72 + idents * IDENTITY_WIRE)
            self.charge_citizen(cid, down=size)
            self.charge_politician(out.source, up=size)
            node.local = out.state
        return True

    def _run_round(self, round_no: int) -> None:
        cfg = self.cfg
        rp = self.round_params
        store = self.store
        self._reset_meters()
        self._inject_transactions(round_no)
        round_time = 0

        seed1 = store.hashes[round_no - 1]
        committee = self._select_committee(round_no)
        member_ids = [cid for cid, _ in committee]
        member_vrfs = dict(committee)
        n = len(committee)
        if n == 0:
            raise SimulationInvariantError(f"round {round_no}: empty committee")

        # Per-member safe samples, fixed for the whole round.
        samples = {cid: draw_safe_sample(self.rng(f"sample.{round_no}.{cid}"),
                                         cfg.politicians, cfg.fanout)
                   for cid in member_ids}

        ledger_params = GetLedgerParams(
            t_star=rp.t_star, k_bits=cfg.sortition_bits,
            registrar_vk=self.registrar.verification_key,
            cooloff=cfg.cooloff)
        synced: set[int] = set()
        for cid in member_ids:
            if self._sync_member(cid, round_no, samples[cid], ledger_params):
                synced.add(cid)
        round_time += self._phase_time(round_no, "sync")

        good_members = [cid for cid in member_ids
                        if cid in synced and not self.citizens[cid].corrupt]
        corrupt_members = [cid for cid in member_ids if self.citizens[cid].corrupt]

        # Designated politicians freeze their shards.
        designated = designated_politicians(round_no, seed1, rp.rho,
                                            cfg.politicians)
        shards: dict[int, list[Transaction]] = {pid: [] for pid in designated}
        for uuid in sorted(self.pending):
            tx = self.pending[uuid]
            pid = shard_transaction(tx.originator_vk, round_no, designated)
            shards[pid].append(tx)

        pools: dict[int, TxPool] = {}
        commitments: dict[int, Commitment] = {}
        alt_pools: dict[int, TxPool] = {}
        alt_commitments: dict[int, Commitment] = {}
        served_to: dict[int, Optional[set[int]]] = {}  # pid -> cids or None=all
        bad_in_committee = len(corrupt_members)
        for slot, pid in enumerate(designated):
            pol = self.politicians[pid]
            if pol.has("withhold_commitments") or pol.has("drop"):
                continue
            pool, commitment = freeze_pool(pol.keypair, pid, round_no,
                                           shards[pid], cfg.pool_cap)
            pools[pid] = pool
            commitments[pid] = commitment
            if pol.has("equivocate"):
                alt, alt_c = freeze_pool(pol.keypair, pid, round_no,
                                         shards[pid][1:], cfg.pool_cap)
                alt_pools[pid] = alt
                alt_commitments[pid] = alt_c
            if pol.has("split_view"):
                want = rp.witness_threshold - bad_in_committee + cfg.split_extra
                victims = set(sorted(good_members)[:max(want, 0)])
                served_to[pid] = victims
            else:
                served_to[pid] = None

        # Members download pools and upload witness lists.
        witness_lists = {}
        member_holds: dict[int, dict[int, Commitment]] = {}
        pool_by_digest: dict[bytes, TxPool] = {}
        for pool in list(pools.values()) + list(alt_pools.values()):
            pool_by_digest[pool.digest()] = pool
        for cid in sorted(member_ids):
            node = self.citizens[cid]
            holds: dict[int, Commitment] = {}
            down = 0
            for slot, pid in enumerate(designated):
                if pid not in pools:
                    continue
                use_alt = (self.politicians[pid].has("equivocate")
                           and cid % 2 == 1)
                commitment = alt_commitments[pid] if use_alt else commitments[pid]
                pool = alt_pools[pid] if use_alt else pools[pid]
                allowed = served_to.get(pid)
                if node.corrupt:
                    holds[slot] = commitment  # corrupt members claim everything
                    continue
                if allowed is not None and cid not in allowed:
                    continue
                if not commitment.verify(self.politicians[pid].keypair.verification_key):
                    continue
                holds[slot] = commitment
                down += len(pool.txs) * TX_WIRE_BYTES + COMMITMENT_WIRE
                self.charge_politician(pid, up=len(pool.txs) * TX_WIRE_BYTES)
            member_holds[cid] = holds
            if cid not in synced:
                continue
            self.charge_citizen(cid, down=down)
            slots = [holds.get(s) for s in range(rp.rho)]
            wl = make_witness_list(node.keypair, round_no, slots,
                                   member_vrfs[cid])
            witness_lists[cid] = wl
            wl_size = rp.rho * WITNESS_SLOT_WIRE + SIG_WIRE + VRF_WIRE
            self.charge_citizen(cid, up=wl_size * len(samples[cid].politicians))
            for pid in samples[cid].politicians:
                self.charge_politician(pid, down=wl_size)
        round_time += self._phase_time(round_no, "pools")

        # Witness lists gossip by full broadcast; commitment equivocation
        # surfaces here and blacklists the politician for the round.
        wl_size = rp.rho * WITNESS_SLOT_WIRE + SIG_WIRE + VRF_WIRE
        for cid in sorted(witness_lists):
            first = min(samples[cid].politicians)
            self.charge_politician(first, up=full_broadcast_bytes(wl_size,
                                                                  cfg.politicians))
            for pol in self.politicians:
                if pol.pid != first:
                    self.charge_politician(pol.pid, down=wl_size)
        equivocations = find_equivocations(witness_lists.values())
        for ev in equivocations:
            vk = self.politicians[ev.first.politician].keypair.verification_key
            if not ev.verify(vk):
                raise SimulationInvariantError("equivocation evidence invalid")
        blacklisted = frozenset(ev.first.politician for ev in equivocations)
        round_time += self._phase_time(round_no, "witness")

        # First re-upload, then politician gossip on pool payloads.
        honest_holdings: dict[int, set[int]] = {
            pol.pid: set() for pol in self.politicians}
        for slot, pid in enumerate(designated):
            pol = self.politicians[pid]
            if pid in pools and not pol.corrupt:
                honest_holdings[pid].add(slot)
        slot_of = {pid: slot for slot, pid in enumerate(designated)}

        def reupload(cid: int, count: int, tag: str) -> None:
            holds = member_holds.get(cid, {})
            if not holds or self.citizens[cid].corrupt:
                return
            rng = self.rng(f"{tag}.{round_no}.{cid}")
            chosen = rng.sample(sorted(holds), min(count, len(holds)))
            target = rng.randrange(cfg.politicians)
            size = sum(
                len(pool_by_digest[holds[s].pool_digest].txs) * TX_WIRE_BYTES
                for s in chosen)
            self.charge_citizen(cid, up=size)
            self.charge_politician(target, down=size)
            if not self.politicians[target].corrupt:
                honest_holdings[target].update(chosen)

        for cid in sorted(witness_lists):
            reupload(cid, rp.reupload_first, "reupload1")
        gossip_report_1 = self._run_gossip(round_no, honest_holdings, "g1")
        round_time += self._phase_time(round_no, "gossip1", hops=4)

        available = set()
        for pid, holding in honest_holdings.items():
            if not self.politicians[pid].corrupt:
                available |= holding

        # Proposals.
        eligible_proposers = sortition.select_proposers(
            [sortition.CommitteeMember(vk=self.citizens[cid].keypair.verification_key,
                                       vrf=member_vrfs[cid])
             for cid in sorted(member_ids)],
            {self.citizens[cid].keypair.verification_key: self.citizens[cid].keypair
             for cid in member_ids},
            seed1, round_no, rp.proposer_bits)
        vk_to_cid = {self.citizens[cid].keypair.verification_key: cid
                     for cid in member_ids}
        proposals: list[tuple[int, Proposal]] = []
        for vk, vrf in eligible_proposers:
            cid = vk_to_cid[vk]
            node = self.citizens[cid]
            if cid not in synced and not node.corrupt:
                continue
            wls = list(witness_lists.values())
            if node.corrupt and "malicious_proposer" in self.citizen_strategies:
                votes = count_witness_votes(wls, rp.rho)
                scarce = []
                slot_comm: dict[int, Commitment] = {}
                for wl in wls:
                    for i, c in enumerate(wl.slots[:rp.rho]):
                        if c is not None:
                            slot_comm.setdefault(i, c)
                for i in range(rp.rho):
                    counts = votes[i]
                    if counts and min(counts.values()) < rp.witness_threshold:
                        scarce.append(slot_comm[i])
                id_list = scarce
            else:
                id_list = select_commitments(wls, rp.rho, rp.witness_threshold,
                                             blacklisted)
            proposal = make_proposal(node.keypair, round_no, vrf, id_list)
            proposals.append((cid, proposal))
            wl_bytes = len(witness_lists) * (rp.rho * WITNESS_SLOT_WIRE + SIG_WIRE)
            self.charge_citizen(
                cid, down=wl_bytes,
                up=(len(id_list) * COMMITMENT_WIRE + SIG_WIRE) * cfg.fanout)
        round_time += self._phase_time(round_no, "proposals")

        # Local winner and initial consensus values.
        winner_cid, winner = None, None
        for cid, proposal in proposals:
            if winner is None or proposal.vrf.value < winner.vrf.value:
                winner_cid, winner = cid, proposal
        null_entries_good = 0
        inputs: dict[int, object] = {}
        compliant_corrupt: dict[int, object] = {}
        vote_manipulation = "bba_vote_manipulation" in self.citizen_strategies
        for cid in sorted(member_ids):
            node = self.citizens[cid]
            if cid not in synced and not node.corrupt:
                continue
            if winner is None:
                value = None
            else:
                holds = member_holds.get(cid, {})
                have = {holds[s].pool_digest for s in holds}
                missing = [c for c in winner.id_list
                           if c.pool_digest not in have]
                obtained = True
                fetched = 0
                for c in missing:
                    slot = slot_of.get(c.politician)
                    if slot is not None and slot in available:
                        fetched += len(pool_by_digest[c.pool_digest].txs) \
                            * TX_WIRE_BYTES
                        holds[slot] = c
                    else:
                        obtained = False
                if fetched:
                    self.charge_citizen(cid, down=fetched)
                value = winner.digest() if obtained else None
                if not obtained and not node.corrupt and cid in synced:
                    null_entries_good += 1
            if node.corrupt:
                compliant_corrupt[cid] = value
            else:
                inputs[cid] = value

        # Consensus: compliant corrupt members follow the protocol unless a
        # vote-manipulation strategy is on; sync-failed honest members are
        # silent participants the adversary does not control.
        silent = [cid for cid in member_ids
                  if cid not in synced and not self.citizens[cid].corrupt]
        if vote_manipulation:
            adversary = _ControlledOnly(DelayMaximizer(n), set(corrupt_members))
            corrupt_party = sorted(set(corrupt_members) | set(silent))
            engine_inputs = dict(inputs)
        else:
            adversary = None
            corrupt_party = sorted(silent)
            engine_inputs = {**inputs, **compliant_corrupt}
        result = run_string_consensus(
            engine_inputs, corrupt_party, seed1 + round_no.to_bytes(8, "big"),
            t=(n - 1) // 3, adversary=adversary, union_delivery=True)
        if not result.terminated:
            raise SimulationInvariantError(
                f"round {round_no}: consensus failed to terminate")
        if not result.agreement_holds():
            raise SimulationInvariantError(
                f"round {round_no}: consensus agreement violated")
        output = result.output
        # Consensus vote traffic: members push votes through their samples,
        # politicians broadcast each step.
        steps = result.total_steps
        for cid in sorted(engine_inputs):
            self.charge_citizen(cid, up=steps * VOTE_WIRE * cfg.fanout,
                                down=steps * VOTE_WIRE)
        per_pol = steps * VOTE_WIRE * max(1, len(engine_inputs))
        for pol in self.politicians:
            self.charge_politician(pol.pid, up=per_pol // cfg.politicians,
                                   down=per_pol // cfg.politicians)
        round_time += self._phase_time(round_no, "consensus",
                                       hops=2 * max(1, steps))

        # Property 1 audit over truly-honest inputs.
        p1_ok = True
        if output is not None:
            matching = sum(1 for cid, v in inputs.items()
                           if v is not None and v == output)
            p1_ok = matching >= property1_threshold(n)
            if not p1_ok:
                raise SimulationInvariantError(
                    f"round {round_no}: consensus output lacked honest backing "
                    f"({matching} < {property1_threshold(n)})")

        # Second re-upload and another gossip pass.
        for cid in sorted(witness_lists):
            reupload(cid, rp.reupload_second, "reupload2")
        gossip_report_2 = self._run_gossip(round_no, honest_holdings, "g2")
        round_time += self._phase_time(round_no, "gossip2", hops=4)
        available = set()
        for pid, holding in honest_holdings.items():
            if not self.politicians[pid].corrupt:
                available |= holding

        # Block construction, state read/write, and commit signatures.
        commits: list[SignedCommit] = []
        abstained_good = 0
        incorrect_reads = 0
        incorrect_updates = 0
        evidence_count = 0
        winner_proposal = None
        if output is not None:
            for cid, proposal in proposals:
                if proposal.digest() == output:
                    winner_proposal = proposal
                    break
        if output is not None and winner_proposal is None:
            raise SimulationInvariantError(
                f"round {round_no}: consensus output references no proposal")

        if output is None or not winner_proposal.id_list:
            block = store.make_empty_block()
            new_root = store.roots[-1]
            new_tree = None
            oracle = None
            touched_keys: list[bytes] = []
            id_list_pools: list[tuple[bytes, Sequence[Transaction]]] = []
            new_identities = []
        else:
            id_list_pools = []
            for c in winner_proposal.id_list:
                pool = pool_by_digest.get(c.pool_digest)
                if pool is None:
                    raise SimulationInvariantError(
                        f"round {round_no}: committed pool digest unknown")
                id_list_pools.append((c.pool_digest, pool.txs))
            touched_keys = referenced_keys(p for _, p in id_list_pools)
            oracle_values = {k: store.tree.get(k) for k in touched_keys}
            new_identities = self._accept_identities(round_no)
            oracle = build_block(round_no, store.hashes[-1],
                                 store.sb_hashes[-1], id_list_pools,
                                 oracle_values, new_identities)
            delta, new_root = delta_apply(store.tree, oracle.updates,
                                          memo_rows=self.cfg.depth)
            block = oracle.block
            new_tree = delta

        expected_hash = block.hash()
        expected_sb = block.subblock.hash()

        if output is not None and winner_proposal.id_list:
            reads = self._member_state_sessions(
                round_no, good_members, samples, touched_keys, oracle,
                store.tree, new_tree, new_root)
            incorrect_reads, incorrect_updates, evidence_count = reads[1:]
            member_roots = reads[0]
        else:
            member_roots = {cid: new_root for cid in good_members}

        for cid in sorted(member_ids):
            node = self.citizens[cid]
            if node.corrupt:
                if "rival_commit" in self.citizen_strategies:
                    rival_hash = crypto.hash_bytes(b"rival" + seed1)
                    rival_root = crypto.truncated_hash(b"rival-root" + seed1,
                                                       cfg.hash_len)
                    sig = sign_commit(node.keypair, rival_hash, rival_root,
                                      expected_sb, round_no)
                    commits.append(SignedCommit(sig=sig, hash_block=rival_hash,
                                                gs_root=rival_root,
                                                hash_subblock=expected_sb))
                continue
            if cid not in synced:
                continue
            root = member_roots.get(cid)
            if root is None:
                abstained_good += 1
                continue
            sig = sign_commit(node.keypair, expected_hash, root, expected_sb,
                              round_no)
            commits.append(SignedCommit(sig=sig, hash_block=expected_hash,
                                        gs_root=root, hash_subblock=expected_sb))
            self.charge_citizen(cid, up=SIG_WIRE * cfg.fanout)

        tally = tally_commit(commits, round_no, rp.t_star)
        if tally is None:
            raise StalledRound(f"round {round_no}: no pair reached t_star")
        (got_hash, got_root, got_sb), sigs = tally
        if got_hash != expected_hash or got_root != new_root or got_sb != expected_sb:
            raise SimulationInvariantError(
                f"round {round_no}: committed pair diverges from the canonical block")
        round_time += self._phase_time(round_no, "commit")

        memberships = {self.citizens[cid].keypair.verification_key:
                       member_vrfs[cid] for cid in sorted(member_ids)}
        store.append(block, new_root, sigs, memberships,
                     tree=new_tree.materialize() if new_tree is not None else None)
        self.prev_tree = store.tree

        # Reap committed transactions; fairness bookkeeping.
        for tx in block.tx_list:
            self.pending.pop(tx.uuid, None)
            delay = round_no - self.inject_round.get(tx.uuid, round_no)
            self.max_commit_delay = max(self.max_commit_delay, delay)
            self.total_committed += 1

        self.sim_time_us += round_time
        empty = len(block.tx_list) == 0
        stats = RoundStats(
            height=round_no, committee_size=n,
            corrupt_members=len(corrupt_members),
            synced_good=len(good_members), empty=empty,
            pools=len(block.id_list), tx_count=len(block.tx_list),
            consensus_rounds=result.bba_rounds,
            signature_count=len(sigs), output_null=output is None,
            proposer_corrupt=(winner_cid is not None
                              and self.citizens[winner_cid].corrupt),
            honest_winner_null_entries=(
                null_entries_good
                if winner_cid is not None and not self.citizens[winner_cid].corrupt
                else 0),
            property1_ok=p1_ok,
            gossip_complete=(gossip_report_1.honest_complete_tick is not None
                             and gossip_report_2.honest_complete_tick is not None),
            gossip_honest_uploads=gossip_report_1.honest_uploads_at_completion(),
            incorrect_reads=incorrect_reads, incorrect_updates=incorrect_updates,
            evidence_count=evidence_count + len(equivocations),
            abstained_good=abstained_good)
        self.rounds.append(stats)
        self._record_metrics(round_no, stats, expected_hash, round_time)

    def _accept_identities(self, round_no: int) -> list[Identity]:
        accepted = []
        for ident in self._new_identities(round_no):
            if ident.tk in self._used_tks:
                continue
            self._used_tks.add(ident.tk)
            accepted.append(Identity(tk=ident.tk, cert_tk=ident.cert_tk,
                                     vk=ident.vk, cert_vk=ident.cert_vk,
                                     added_at_block=round_no))
        return accepted

    def _run_gossip(self, round_no: int, honest_holdings: dict[int, set[int]],
                    tag: str):
        cfg = self.cfg
        nodes = []
        for pol in self.politicians:
            sink = pol.has("gossip_sinkhole")
            nodes.append(GossipNodeState(
                node_id=pol.pid, honest=not pol.corrupt,
                held=set(honest_holdings.get(pol.pid, set())),
                sinkhole=sink))
        engine = PrioritizedGossip(nodes, n_pools=self.round_params.rho,
                                   pool_size=cfg.pool_size_bytes,
                                   k_outstanding=cfg.gossip_k,
                                   request_timeout=cfg.gossip_timeout,
                                   service_quota=cfg.gossip_quota)
        report = engine.run(max_ticks=300)
        if report.honest_complete_tick is None:
            raise SimulationInvariantError(
                f"round {round_no}: gossip did not complete")
        for state in report.nodes.values():
            self.charge_politician(state.node_id, up=state.up_bytes,
                                   down=state.down_bytes)
            if not self.politicians[state.node_id].corrupt:
                honest_holdings[state.node_id] = set(state.held)
        return report

    def _member_state_sessions(self, round_no, good_members, samples,
                               touched_keys, oracle, base_tree, delta,
                               oracle_root):
        """Per-good-member global-state read and update sessions."""
        cfg = self.cfg
        level = self.write_params.frontier_level
        keys = sorted(touched_keys)
        honest_read = TreeReadProvider(base_tree, keys, self.read_params)
        honest_update = TreeUpdateProvider(base_tree, delta, level)
        oracle_values = {k: base_tree.get(k) for k in keys}

        corrupt_read: dict[str, object] = {}
        corrupt_update: dict[str, object] = {}
        rngc = self.rng(f"gscorrupt.{round_no}")
        corrupt_keys = rngc.sample(keys, min(cfg.gs_corrupt_keys, len(keys)))
        width = 1 << level
        corrupt_front = rngc.sample(range(width), min(cfg.gs_corrupt_keys, width))

        def read_provider_for(pol: PoliticianNode, cid: int):
            if not pol.corrupt:
                return honest_read
            if pol.has("drop"):
                return corrupt_read.setdefault("drop", DropReadProvider())
            if pol.has("staleness") and self.prev_tree is not None:
                return corrupt_read.setdefault(
                    "stale", TreeReadProvider(self.prev_tree, keys,
                                              self.read_params))
            if pol.has("split_view") and cid % 2 == 0:
                return corrupt_read.setdefault(
                    "split", SplitViewReadProvider(base_tree, keys,
                                                   self.read_params,
                                                   corrupt_keys))
            return honest_read

        def update_provider_for(pol: PoliticianNode, cid: int):
            if not pol.corrupt:
                return honest_update
            if pol.has("drop"):
                return corrupt_update.setdefault("drop", DropUpdateProvider())
            if pol.has("split_view") and cid % 2 == 0:
                return corrupt_update.setdefault(
                    "split", SplitViewUpdateProvider(base_tree, delta, level,
                                                     corrupt_front))
            return honest_update

        member_roots: dict[int, Optional[bytes]] = {}
        incorrect_reads = 0
        incorrect_updates = 0
        evidence = 0
        # One verifier per round root: path work verified once is shared by
        # every member (the memo only ever holds root-chained digests).
        from .smt import PathVerifier
        shared_verifier = PathVerifier(base_tree.root, cfg.depth, cfg.hash_len)
        bundle_cache: dict = {}
        ordered_keys = None
        from .gsproto import sort_keys_for_buckets
        ordered_keys = sort_keys_for_buckets(keys)
        for cid in sorted(good_members):
            sample = samples[cid].politicians
            meter = SessionMeter()
            rng = self.rng(f"gsread.{round_no}.{cid}")
            providers = {pid: read_provider_for(self.politicians[pid], cid)
                         for pid in sample}
            read = gs_read(rng, keys, list(sample), providers,
                           base_tree.root, self.read_params, cfg.depth,
                           cfg.theta, cfg.hash_len, meter,
                           verifier=shared_verifier, ordered_keys=ordered_keys)
            evidence += len(read.evidence)
            if not read.ok:
                member_roots[cid] = None
                continue
            if any(read.values[k] != oracle_values[k] for k in keys):
                incorrect_reads += 1
                member_roots[cid] = None
                continue
            rng_u = self.rng(f"gsupdate.{round_no}.{cid}")
            uproviders = {pid: update_provider_for(self.politicians[pid], cid)
                          for pid in sample}
            update = gs_update(rng_u, oracle.updates, list(sample), uproviders,
                               base_tree.root, self.write_params, cfg.depth,
                               cfg.theta, cfg.hash_len, meter,
                               verifier=shared_verifier, bundle_cache=bundle_cache)
            evidence += len(update.evidence)
            if not update.ok:
                member_roots[cid] = None
                continue
            if update.new_root != oracle_root:
                incorrect_updates += 1
            member_roots[cid] = update.new_root
            self.charge_citizen(cid, up=meter.total_up, down=meter.total_down)
            for pid in sample:
                self.charge_politician(
                    pid, up=meter.total_down // max(len(sample), 1))
        if incorrect_reads > self.round_params.rw_allowance or \
                incorrect_updates > self.round_params.rw_allowance:
            raise SimulationInvariantError(
                f"round {round_no}: fooled-citizen allowance exceeded")
        return member_roots, incorrect_reads, incorrect_updates, evidence

    def _record_metrics(self, round_no: int, stats: RoundStats,
                        block_hash: bytes, round_time: int) -> None:
        cit_up = sorted(self.cit_up.values())
        cit_down = sorted(self.cit_down.values())
        pol_up = sorted(self.pol_up.values())
        pol_down = sorted(self.pol_down.values())
        rec = BlockMetricsRecord(
            schema=SCHEMA_VERSION, height=round_no, block_hash=block_hash.hex(),
            empty=stats.empty, pools=stats.pools, tx_count=stats.tx_count,
            sim_time_us=self.sim_time_us, block_time_us=round_time,
            consensus_rounds=stats.consensus_rounds,
            committee_size=stats.committee_size,
            signatures=stats.signature_count,
            citizen_up_p50=percentile(cit_up, 0.50),
            citizen_up_p90=percentile(cit_up, 0.90),
            citizen_up_p99=percentile(cit_up, 0.99),
            citizen_down_p50=percentile(cit_down, 0.50),
            citizen_down_p90=percentile(cit_down, 0.90),
            citizen_down_p99=percentile(cit_down, 0.99),
            politician_up_p50=percentile(pol_up, 0.50),
            politician_up_p90=percentile(pol_up, 0.90),
            politician_up_p99=percentile(pol_up, 0.99),
            politician_down_p50=percentile(pol_down, 0.50),
            politician_down_p90=percentile(pol_down, 0.90),
            politician_down_p99=percentile(pol_down, 0.99),
            evidence_count=stats.evidence_count,
            incorrect_reads=stats.incorrect_reads,
            incorrect_updates=stats.incorrect_updates)
        self.records.append(rec)
        self._reset_meters()


def run_simulation(config: SimConfig) -> SimReport:
    """Validate, run, and return the full report for one scenario."""
    return Simulation(config).run()
