import random

from chainutil import build_chain, build_population

from splitchain import crypto
from splitchain.chain import HonestLedgerView, StaleLedgerView
from splitchain.crypto import KeyPair
from splitchain.ledger import (
    GetLedgerParams,
    Identity,
    IdentityRegistry,
    LedgerBundle,
    RegistrationResult,
    SubBlock,
    TxValidity,
    balance_key,
    build_block,
    empty_block,
    encode_value,
    get_ledger,
    make_identity,
    make_transaction,
    nonce_key,
    validate_transaction,
)


def _tx_state(balance, nonce, acct=0):
    return {balance_key(acct): encode_value(balance),
            nonce_key(acct): encode_value(nonce)}


class TestValidateTransaction:
    def setup_method(self):
        self.kp = KeyPair.from_seed(b"\x05" * 32)

    def _tx(self, nonce=1, amount=100, acct=0):
        return make_transaction(self.kp, nonce, balance_key(acct),
                                balance_key(1), amount)

    def test_exact_balance_boundary_valid(self):
        assert validate_transaction(self._tx(amount=100), _tx_state(100, 0)) \
            is TxValidity.VALID

    def test_overspend(self):
        assert validate_transaction(self._tx(amount=101), _tx_state(100, 0)) \
            is TxValidity.OVERSPEND

    def test_replay_stale_nonce(self):
        tx = self._tx(nonce=1)
        assert validate_transaction(tx, _tx_state(100, 1)) is TxValidity.BAD_NONCE

    def test_future_nonce(self):
        assert validate_transaction(self._tx(nonce=3), _tx_state(100, 1)) \
            is TxValidity.BAD_NONCE

    def test_tampered_signature(self):
        tx = self._tx()
        bad = type(tx)(**{**tx.__dict__, "amount": tx.amount + 1})
        assert validate_transaction(bad, _tx_state(1000, 0)) is TxValidity.BAD_SIGNATURE


class TestIdentityRegistry:
    def setup_method(self):
        self.registrar = KeyPair.from_seed(b"\x06" * 32)
        self.registry = IdentityRegistry(self.registrar.verification_key)

    def test_fresh_tk_accepted(self):
        ident = make_identity(self.registrar, b"t1", KeyPair.from_seed(b"\x01" * 32))
        assert self.registry.register(ident, 5) is RegistrationResult.ACCEPTED
        assert self.registry.added_at(ident.vk) == 5

    def test_duplicate_tee_rejected(self):
        first = make_identity(self.registrar, b"t1", KeyPair.from_seed(b"\x01" * 32))
        second = make_identity(self.registrar, b"t1", KeyPair.from_seed(b"\x02" * 32))
        assert self.registry.register(first, 5) is RegistrationResult.ACCEPTED
        assert self.registry.register(second, 6) is RegistrationResult.DUPLICATE_TEE

    def test_bad_cert_rejected(self):
        other = KeyPair.from_seed(b"\x09" * 32)
        ident = make_identity(other, b"t1", KeyPair.from_seed(b"\x01" * 32))
        assert self.registry.register(ident, 5) is RegistrationResult.BAD_CERT

    def test_cooloff_eligibility(self):
        ident = make_identity(self.registrar, b"t1", KeyPair.from_seed(b"\x01" * 32))
        self.registry.register(ident, 10)
        assert not self.registry.eligible(ident.vk, 49)
        assert self.registry.eligible(ident.vk, 50)


class TestBuildBlock:
    def setup_method(self):
        self.kp_a = KeyPair.from_seed(b"\x0a" * 32)
        self.kp_b = KeyPair.from_seed(b"\x0b" * 32)
        self.state = {
            balance_key(0): encode_value(100), nonce_key(0): encode_value(0),
            balance_key(1): encode_value(50), nonce_key(1): encode_value(0),
            balance_key(2): encode_value(0), nonce_key(2): encode_value(0),
        }

    def test_two_executors_identical_hash(self):
        tx1 = make_transaction(self.kp_a, 1, balance_key(0), balance_key(2), 10)
        tx2 = make_transaction(self.kp_b, 1, balance_key(1), balance_key(2), 5)
        pools = [(b"d1" * 16, [tx1]), (b"d2" * 16, [tx2])]
        r1 = build_block(1, b"\x01" * 32, b"\x02" * 32, pools, self.state)
        r2 = build_block(1, b"\x01" * 32, b"\x02" * 32,
                         [(d, list(p)) for d, p in pools], dict(self.state))
        assert r1.block.hash() == r2.block.hash()
        assert r1.updates == r2.updates

    def test_conflicting_spends_first_survives(self):
        # two spends from the same account; balance covers only one
        tx1 = make_transaction(self.kp_a, 1, balance_key(0), balance_key(1), 80)
        tx2 = make_transaction(self.kp_a, 2, balance_key(0), balance_key(2), 80)
        pools = [(b"d1" * 16, [tx1, tx2])]
        result = build_block(1, b"\x01" * 32, b"\x02" * 32, pools, self.state)
        assert result.applied == (tx1,)
        assert result.dropped[0][1] is TxValidity.OVERSPEND
        # sequential replay oracle: apply one-by-one with fresh dict
        assert result.updates[balance_key(0)] == encode_value(20)
        assert result.updates[balance_key(1)] == encode_value(130)

    def test_duplicate_uuid_keeps_first(self):
        tx = make_transaction(self.kp_a, 1, balance_key(0), balance_key(1), 10)
        pools = [(b"d1" * 16, [tx]), (b"d2" * 16, [tx])]
        result = build_block(1, b"\x01" * 32, b"\x02" * 32, pools, self.state)
        assert result.applied == (tx,)

    def test_empty_idlist_gives_empty_block(self):
        result = build_block(1, b"\x01" * 32, b"\x02" * 32, [], self.state)
        assert result.block.empty
        assert result.block.hash() == empty_block(1, b"\x01" * 32, b"\x02" * 32).hash()


class TestGetLedger:
    def setup_method(self):
        self.registrar, self.citizens, self.store = build_chain(
            n_citizens=8, blocks=12, t_star=6)
        self.params = GetLedgerParams(
            t_star=6, k_bits=0,
            registrar_vk=self.registrar.verification_key)

    def test_honest_sample_jump_10(self):
        state = self.store.genesis_local_state()
        views = {i: HonestLedgerView(self.store) for i in range(5)}
        out = get_ledger(state, views, self.params)
        assert out.accepted
        assert out.state.height == 10
        assert out.state.hash_block == self.store.hashes[10]
        assert out.state.gs_root == self.store.roots[10]
        assert sorted(out.state.recent_hashes) == list(range(1, 11))

    def test_staleness_attack_highest_claim_wins(self):
        state = self.store.genesis_local_state()
        views = {i: StaleLedgerView(self.store, lag=3) for i in range(24)}
        views[24] = HonestLedgerView(self.store)
        out = get_ledger(state, views, self.params)
        assert out.accepted
        assert out.source == 24
        assert out.state.height == 10

    def test_all_stale_still_advances_to_stale_height(self):
        state = self.store.genesis_local_state()
        views = {i: StaleLedgerView(self.store, lag=4) for i in range(25)}
        out = get_ledger(state, views, self.params)
        assert out.accepted
        assert out.state.height == 8

    def test_forged_subblock_rejected(self):
        registrar, citizens, store = build_chain(n_citizens=8, blocks=12, t_star=6)
        intruder = make_identity(registrar, b"tee-intruder",
                                 KeyPair.from_seed(b"\x77" * 32))

        class ForgingView(HonestLedgerView):
            def ledger_bundle(self, from_height, to_height):
                bundle = super().ledger_bundle(from_height, to_height)
                if bundle is None:
                    return None
                sb = bundle.subblocks[4]
                forged = SubBlock(height=sb.height,
                                  new_identities=(intruder,),
                                  hash_prev_block=sb.hash_prev_block,
                                  hash_prev_subblock=sb.hash_prev_subblock)
                subblocks = bundle.subblocks[:4] + (forged,) + bundle.subblocks[5:]
                return LedgerBundle(
                    height=bundle.height, hash_block=bundle.hash_block,
                    gs_root=bundle.gs_root, hash_subblock=bundle.hash_subblock,
                    commit_sigs=bundle.commit_sigs,
                    memberships=bundle.memberships, subblocks=subblocks)

        params = GetLedgerParams(t_star=6, k_bits=0,
                                 registrar_vk=registrar.verification_key)
        state = store.genesis_local_state()
        out = get_ledger(state, {0: ForgingView(store)}, params)
        assert not out.accepted
        assert out.evidence[0][1] in ("subblock_chain_broken", "subblock_hash_mismatch")

    def test_new_identities_accumulate_and_cooloff(self):
        registrar, citizens = build_population(8)
        newcomer_kp = KeyPair.from_seed(b"\x55" * 32)
        newcomer = make_identity(registrar, b"tee-new", newcomer_kp)
        registrar, citizens, store = build_chain(
            n_citizens=8, blocks=12, t_star=6,
            new_identities_at={3: [newcomer]},
            registrar=registrar, citizens=citizens)
        state = store.genesis_local_state()
        params = GetLedgerParams(t_star=6, k_bits=0,
                                 registrar_vk=registrar.verification_key)
        out = get_ledger(state, {0: HonestLedgerView(store)}, params)
        assert out.accepted
        assert out.state.knows_identity(newcomer.vk, 3)
        assert not out.state.eligible(newcomer.vk, 42)
        assert out.state.eligible(newcomer.vk, 43)

    def test_below_threshold_rejected(self):
        class ThinView(HonestLedgerView):
            def ledger_bundle(self, from_height, to_height):
                bundle = super().ledger_bundle(from_height, to_height)
                return LedgerBundle(
                    height=bundle.height, hash_block=bundle.hash_block,
                    gs_root=bundle.gs_root, hash_subblock=bundle.hash_subblock,
                    commit_sigs=bundle.commit_sigs[:5],
                    memberships=bundle.memberships, subblocks=bundle.subblocks)

        state = self.store.genesis_local_state()
        out = get_ledger(state, {0: ThinView(self.store)}, self.params)
        assert not out.accepted
        assert out.evidence[0][1] == "below_threshold"

    def test_repeated_jumps_track_whole_chain(self):
        state = self.store.genesis_local_state()
        views = {0: HonestLedgerView(self.store)}
        while state.height < self.store.height:
            out = get_ledger(state, views, self.params)
            assert out.accepted
            state = out.state
        assert state.height == 12
        assert state.hash_block == self.store.hashes[12]
