"""Chain dump serialization: a self-contained, line-delimited record of a
run that an independent auditor can replay from genesis.

Line 1 is the header (parameters, registrar key, genesis identities and
state); each following line is one block with its transactions, identity
additions, commitment list, commit signatures, and membership proofs.
Digests are hex; field order is fixed so dumps compare byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .chain import ChainStore
from .crypto import VrfOutput
from .ledger import (
    CommitSignature,
    Identity,
    SubBlock,
    Transaction,
    Block,
)


def _hex(b: bytes) -> str:
    return b.hex()


def _ident_obj(i: Identity) -> dict:
    return {"tk": _hex(i.tk), "cert_tk": _hex(i.cert_tk), "vk": _hex(i.vk),
            "cert_vk": _hex(i.cert_vk), "added_at": i.added_at_block}


def _ident_from(obj: dict) -> Identity:
    return Identity(tk=bytes.fromhex(obj["tk"]),
                    cert_tk=bytes.fromhex(obj["cert_tk"]),
                    vk=bytes.fromhex(obj["vk"]),
                    cert_vk=bytes.fromhex(obj["cert_vk"]),
                    added_at_block=obj["added_at"])


def _tx_obj(t: Transaction) -> dict:
    return {"uuid": _hex(t.uuid), "vk": _hex(t.originator_vk), "nonce": t.nonce,
            "debit": _hex(t.debit_key), "credit": _hex(t.credit_key),
            "amount": t.amount, "sig": _hex(t.signature)}


def _tx_from(obj: dict) -> Transaction:
    return Transaction(uuid=bytes.fromhex(obj["uuid"]),
                       originator_vk=bytes.fromhex(obj["vk"]),
                       nonce=obj["nonce"],
                       debit_key=bytes.fromhex(obj["debit"]),
                       credit_key=bytes.fromhex(obj["credit"]),
                       amount=obj["amount"],
                       signature=bytes.fromhex(obj["sig"]))


def header_line(store: ChainStore) -> str:
    p = store.params
    data = {
        "type": "genesis",
        "schema": 1,
        "depth": p.depth, "theta": p.theta, "hash_len": p.hash_len,
        "k_bits": p.k_bits, "t_star": p.t_star, "cooloff": p.cooloff,
        "registrar_vk": _hex(store.registrar_vk),
        "genesis_hash": _hex(store.hashes[0]),
        "genesis_root": _hex(store.roots[0]),
        "identities": [_ident_obj(i) for i in store.genesis_identities],
        "state": sorted((_hex(k), _hex(v)) for k, v in store.genesis_items.items()),
    }
    return json.dumps(data, separators=(",", ":"))


def block_line(store: ChainStore, height: int) -> str:
    block = store.blocks[height]
    data = {
        "type": "block",
        "height": height,
        "hash": _hex(store.hashes[height]),
        "prev_hash": _hex(block.hash_prev_block),
        "gs_root": _hex(store.roots[height]),
        "sb_hash": _hex(store.sb_hashes[height]),
        "sb_prev_hash": _hex(block.subblock.hash_prev_subblock),
        "id_list": [_hex(d) for d in block.id_list],
        "txs": [_tx_obj(t) for t in block.tx_list],
        "identities": [_ident_obj(i) for i in block.subblock.new_identities],
        "sigs": sorted(
            [{"vk": _hex(s.signer_vk), "sig": _hex(s.signature)}
             for s in store.sigs[height]], key=lambda d: d["vk"]),
        "memberships": sorted(
            (_hex(vk), _hex(v.value), _hex(v.proof))
            for vk, v in store.memberships[height].items()),
    }
    return json.dumps(data, separators=(",", ":"))


def write_dump(store: ChainStore, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header_line(store) + "\n")
        for h in range(1, store.height + 1):
            fh.write(block_line(store, h) + "\n")


@dataclass
class DumpHeader:
    depth: int
    theta: int
    hash_len: int
    k_bits: int
    t_star: int
    cooloff: int
    registrar_vk: bytes
    genesis_hash: bytes
    genesis_root: bytes
    identities: list[Identity]
    state: dict[bytes, bytes]


@dataclass
class DumpBlock:
    height: int
    hash: bytes
    prev_hash: bytes
    gs_root: bytes
    sb_hash: bytes
    sb_prev_hash: bytes
    id_list: list[bytes]
    txs: list[Transaction]
    identities: list[Identity]
    sigs: list[CommitSignature]
    memberships: dict[bytes, VrfOutput]

    def rebuild_block(self) -> Block:
        sb = SubBlock(height=self.height,
                      new_identities=tuple(self.identities),
                      hash_prev_block=self.prev_hash,
                      hash_prev_subblock=self.sb_prev_hash)
        return Block(height=self.height, hash_prev_block=self.prev_hash,
                     subblock=sb, id_list=tuple(self.id_list),
                     tx_list=tuple(self.txs))


def parse_header(line: str) -> DumpHeader:
    obj = json.loads(line)
    if obj.get("type") != "genesis":
        raise ValueError("dump does not start with a genesis header")
    return DumpHeader(
        depth=obj["depth"], theta=obj["theta"], hash_len=obj["hash_len"],
        k_bits=obj["k_bits"], t_star=obj["t_star"], cooloff=obj["cooloff"],
        registrar_vk=bytes.fromhex(obj["registrar_vk"]),
        genesis_hash=bytes.fromhex(obj["genesis_hash"]),
        genesis_root=bytes.fromhex(obj["genesis_root"]),
        identities=[_ident_from(o) for o in obj["identities"]],
        state={bytes.fromhex(k): bytes.fromhex(v) for k, v in obj["state"]})


def parse_block(line: str) -> DumpBlock:
    obj = json.loads(line)
    if obj.get("type") != "block":
        raise ValueError("expected a block record")
    return DumpBlock(
        height=obj["height"],
        hash=bytes.fromhex(obj["hash"]),
        prev_hash=bytes.fromhex(obj["prev_hash"]),
        gs_root=bytes.fromhex(obj["gs_root"]),
        sb_hash=bytes.fromhex(obj["sb_hash"]),
        sb_prev_hash=bytes.fromhex(obj["sb_prev_hash"]),
        id_list=[bytes.fromhex(d) for d in obj["id_list"]],
        txs=[_tx_from(o) for o in obj["txs"]],
        identities=[_ident_from(o) for o in obj["identities"]],
        sigs=[CommitSignature(signer_vk=bytes.fromhex(o["vk"]),
                              signature=bytes.fromhex(o["sig"]))
              for o in obj["sigs"]],
        memberships={bytes.fromhex(vk): VrfOutput(value=bytes.fromhex(val),
                                                  proof=bytes.fromhex(proof))
                     for vk, val, proof in obj["memberships"]})


def read_dump(path: str) -> tuple[DumpHeader, Iterator[DumpBlock]]:
    fh = open(path, "r", encoding="utf-8")
    header = parse_header(fh.readline())

    def blocks() -> Iterator[DumpBlock]:
        with fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield parse_block(line)

    return header, blocks()
