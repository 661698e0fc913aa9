import pytest

from splitchain.bounds import CommitteeBounds
from splitchain.commit import (
    Commitment,
    CommitmentEquivocation,
    RoundParams,
    SignedCommit,
    commitment_message,
    count_witness_votes,
    derive_round_params,
    find_equivocations,
    freeze_pool,
    make_witness_list,
    select_commitments,
    tally_commit,
)
from splitchain.crypto import KeyPair, VrfOutput, hash_bytes
from splitchain.errors import InfeasibleConfig
from splitchain.ledger import balance_key, make_transaction, sign_commit
from splitchain.sortition import designated_politicians, shard_transaction


def _kp(i):
    return KeyPair.from_seed(bytes([i]) * 32)


def _vrf():
    return VrfOutput(value=hash_bytes(b"v"), proof=b"\x00" * 64)


class TestFreezePool:
    def test_empty_shard_still_commits(self):
        pool, commitment = freeze_pool(_kp(1), 3, 7, [], cap=50)
        assert pool.txs == ()
        assert commitment.verify(_kp(1).verification_key)
        assert commitment.pool_digest == pool.digest()

    def test_cap_and_uuid_order(self):
        kp = _kp(2)
        txs = [make_transaction(kp, n, balance_key(0), balance_key(1), 1)
               for n in range(1, 8)]
        pool, _ = freeze_pool(_kp(1), 3, 7, txs, cap=4)
        assert len(pool.txs) == 4
        uuids = [t.uuid for t in pool.txs]
        assert uuids == sorted(uuids)

    def test_equivocation_evidence(self):
        kp = _kp(1)
        tx = make_transaction(_kp(2), 1, balance_key(0), balance_key(1), 1)
        _, c1 = freeze_pool(kp, 3, 7, [], cap=10)
        _, c2 = freeze_pool(kp, 3, 7, [tx], cap=10)
        ev = CommitmentEquivocation(first=c1, second=c2)
        assert ev.verify(kp.verification_key)
        same = CommitmentEquivocation(first=c1, second=c1)
        assert not same.verify(kp.verification_key)

    def test_off_shard_txs_detectable(self):
        # the sharding rule pins which designated politician may carry a
        # transaction; a pool holding someone else's shard is provable
        kp = _kp(2)
        designated = designated_politicians(7, hash_bytes(b"prev"), 5, 20)
        txs = [make_transaction(kp, n, balance_key(0), balance_key(1), 1)
               for n in range(1, 6)]
        owner = shard_transaction(kp.verification_key, 7, designated)
        thief = next(p for p in designated if p != owner)
        pool, _ = freeze_pool(_kp(1), thief, 7, txs, cap=10)
        violations = [t for t in pool.txs
                      if shard_transaction(t.originator_vk, 7, designated)
                      != pool.politician]
        assert len(violations) == len(pool.txs)


class TestWitnessSelection:
    def _commitment(self, pid, digest):
        return Commitment(politician=pid, round_no=1, pool_digest=digest,
                          signature=b"\x00" * 64)

    def _wl(self, kp, slots, rho=4):
        padded = list(slots) + [None] * (rho - len(slots))
        return make_witness_list(kp, 1, padded, _vrf())

    def test_threshold_boundary(self):
        ca = self._commitment(0, b"a" * 32)
        cb = self._commitment(1, b"b" * 32)
        wls = []
        for i in range(5):
            wls.append(self._wl(_kp(i + 1), [ca, cb if i < 4 else None]))
        picked = select_commitments(wls, rho=4, threshold=5)
        assert picked == [ca]  # cb has 4 votes, one short
        picked = select_commitments(wls, rho=4, threshold=4)
        assert picked == [ca, cb]

    def test_votes_keyed_by_digest(self):
        ca = self._commitment(0, b"a" * 32)
        ca2 = self._commitment(0, b"x" * 32)
        wls = [self._wl(_kp(1), [ca]), self._wl(_kp(2), [ca2])]
        votes = count_witness_votes(wls, rho=4)
        assert votes[0] == {b"a" * 32: 1, b"x" * 32: 1}
        evs = find_equivocations(wls)
        assert len(evs) == 1

    def test_blacklisted_politicians_dropped(self):
        ca = self._commitment(0, b"a" * 32)
        wls = [self._wl(_kp(i), [ca]) for i in range(1, 6)]
        assert select_commitments(wls, 4, 2, blacklisted=frozenset({0})) == []


class TestRoundParams:
    def test_threshold_window_validation(self):
        params = RoundParams(rho=45, delta=350, t_star=850, n_b_tilde=772,
                             rw_allowance=36)
        params.validate(n_g_star=1137)  # paper-scale window holds
        with pytest.raises(InfeasibleConfig):
            RoundParams(rho=45, delta=350, t_star=808, n_b_tilde=772,
                        rw_allowance=36).validate(n_g_star=1137)
        with pytest.raises(InfeasibleConfig):
            RoundParams(rho=45, delta=350, t_star=1102, n_b_tilde=772,
                        rw_allowance=36).validate(n_g_star=1137)

    def test_derive_from_bounds(self):
        bounds = CommitteeBounds(n_star=172, n_tilde=229, n_g_star=116,
                                 n_b_tilde=72, gap_min=4.0)
        params = derive_round_params(bounds, rho=10)
        assert bounds.n_b_tilde + params.rw_allowance < params.t_star
        assert params.t_star <= bounds.n_g_star - params.rw_allowance
        assert params.witness_threshold <= bounds.n_g_star


class TestTally:
    def setup_method(self):
        self.keys = [_kp(i + 1) for i in range(12)]
        self.tuple_a = (hash_bytes(b"block"), b"r" * 10, hash_bytes(b"sb"))
        self.tuple_b = (hash_bytes(b"rival"), b"q" * 10, hash_bytes(b"sb"))

    def _commit(self, kp, tup):
        h, r, s = tup
        return SignedCommit(sig=sign_commit(kp, h, r, s, 9), hash_block=h,
                            gs_root=r, hash_subblock=s)

    def test_threshold_boundary(self):
        commits = [self._commit(kp, self.tuple_a) for kp in self.keys[:5]]
        assert tally_commit(commits, 9, t_star=5) is not None
        assert tally_commit(commits[:4], 9, t_star=5) is None

    def test_duplicate_signers_not_double_counted(self):
        commits = [self._commit(self.keys[0], self.tuple_a)] * 5
        assert tally_commit(commits, 9, t_star=2) is None

    def test_rival_below_threshold_cannot_commit(self):
        commits = [self._commit(kp, self.tuple_a) for kp in self.keys[:7]]
        commits += [self._commit(kp, self.tuple_b) for kp in self.keys[7:12]]
        out = tally_commit(commits, 9, t_star=6)
        assert out is not None
        (h, r, s), sigs = out
        assert h == self.tuple_a[0]
        assert len(sigs) == 7

    def test_bad_signature_ignored(self):
        good = [self._commit(kp, self.tuple_a) for kp in self.keys[:5]]
        forged = SignedCommit(sig=good[0].sig, hash_block=self.tuple_b[0],
                              gs_root=self.tuple_b[1],
                              hash_subblock=self.tuple_b[2])
        out = tally_commit(good + [forged], 9, t_star=5)
        assert out is not None
        assert out[0][0] == self.tuple_a[0]
