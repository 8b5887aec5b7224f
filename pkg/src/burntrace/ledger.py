"""Forensic ledger index: resolves inputs to source values and addresses.

Unlike a node's UTXO set, spent outputs are never pruned; the analyses need
to resolve historical transactions long after their outputs were consumed.
"""

import csv
import pickle
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import ToolkitError, UnknownTx
from .script import ScriptKind, classify_script, derive_address, extract_op_return_payload
from .wire import Amount, Block, OutPoint, Transaction, TxId, txid as compute_txid

SNAPSHOT_MAGIC = b"BTRIDX\x01"


@dataclass(frozen=True)
class OutputInfo:
    value: int
    address: Optional[str]
    kind: ScriptKind
    op_return_payload: Optional[bytes]


@dataclass(frozen=True)
class MissingPrevout:
    txid: TxId
    input_index: int
    outpoint: OutPoint


@dataclass(frozen=True)
class ResolvedTransaction:
    txid: TxId
    inputs: tuple  # (address | None, Amount | None) per input
    outputs: tuple  # (address | None, Amount, ScriptKind, payload | None)
    fee: Optional[Amount]
    time: int
    height: int
    index: int
    is_coinbase: bool

    @property
    def input_addresses(self) -> tuple:
        return tuple(a for a, _ in self.inputs if a is not None)

    @property
    def op_return_value(self) -> int:
        return sum(int(v) for a, v, k, p in self.outputs if k == ScriptKind.OP_RETURN)

    @property
    def op_return_payloads(self) -> tuple:
        return tuple(p for a, v, k, p in self.outputs if k == ScriptKind.OP_RETURN)


@dataclass
class _TxRecord:
    tx: Transaction
    height: int
    time: int
    index: int


class LedgerIndex:
    """Append-only index over a block sequence applied in chain order."""

    def __init__(self, network: str = "mainnet"):
        self.network = network
        self.block_count = 0
        self._txs: dict = {}              # txid bytes -> _TxRecord
        self._order: list = []            # txid bytes in chain order
        self._outputs: dict = {}          # (txid bytes, vout) -> OutputInfo
        self._spent_by: dict = {}         # (txid bytes, vout) -> txid bytes
        self._address_map: dict = {}      # address -> [(time, height, index, txid bytes, role)]
        self.missing: list = []

    def apply_block(self, block: Block) -> None:
        height = self.block_count
        self.block_count += 1
        for tx_index, tx in enumerate(block.transactions):
            tid = bytes(compute_txid(tx))
            if tid in self._txs:
                continue  # BIP-30 style duplicate; first occurrence wins
            self._txs[tid] = _TxRecord(tx, height, block.header.time, tx_index)
            self._order.append(tid)
            seen_roles = set()
            for inp_index, inp in enumerate(tx.inputs):
                prev = inp.previous
                if prev.is_coinbase:
                    continue
                key = (bytes(prev.txid), prev.vout)
                info = self._outputs.get(key)
                if info is None:
                    self.missing.append(MissingPrevout(TxId(tid), inp_index, prev))
                    continue
                self._spent_by[key] = tid
                if info.address is not None and ("input", info.address) not in seen_roles:
                    seen_roles.add(("input", info.address))
                    self._record(info.address, block.header.time, height, tx_index, tid, "input")
            for vout, out in enumerate(tx.outputs):
                cls = classify_script(out.script_pubkey)
                addr = derive_address(cls, self.network)
                payload = cls.payload if cls.kind == ScriptKind.OP_RETURN else None
                encoded = addr.encoded if addr else None
                self._outputs[(tid, vout)] = OutputInfo(int(out.value), encoded, cls.kind, payload)
                if encoded is not None and ("output", encoded) not in seen_roles:
                    seen_roles.add(("output", encoded))
                    self._record(encoded, block.header.time, height, tx_index, tid, "output")

    def _record(self, address: str, time: int, height: int, tx_index: int, tid: bytes, role: str):
        self._address_map.setdefault(address, []).append((time, height, tx_index, tid, role))

    # -- queries ---------------------------------------------------------

    def __contains__(self, tid) -> bool:
        return bytes(self._coerce(tid)) in self._txs

    def __len__(self) -> int:
        return len(self._txs)

    @staticmethod
    def _coerce(tid) -> bytes:
        if isinstance(tid, str):
            return bytes(TxId.from_hex(tid))
        return bytes(tid)

    def transaction(self, tid) -> Transaction:
        rec = self._txs.get(self._coerce(tid))
        if rec is None:
            raise UnknownTx(f"transaction {tid} not indexed")
        return rec.tx

    def txids(self) -> Iterator[TxId]:
        for tid in self._order:
            yield TxId(tid)

    def output_info(self, outpoint: OutPoint) -> Optional[OutputInfo]:
        return self._outputs.get((bytes(outpoint.txid), outpoint.vout))

    def spender_of(self, outpoint: OutPoint) -> Optional[TxId]:
        tid = self._spent_by.get((bytes(outpoint.txid), outpoint.vout))
        return TxId(tid) if tid else None

    def report(self) -> dict:
        return {
            "schema_version": 1,
            "blocks": self.block_count,
            "transactions": len(self._txs),
            "missing_prevouts": len(self.missing),
        }


def build_index(blocks: Iterable[Block], network: str = "mainnet") -> LedgerIndex:
    index = LedgerIndex(network)
    for block in blocks:
        index.apply_block(block)
    return index


def resolve_transaction(index: LedgerIndex, tid) -> ResolvedTransaction:
    key = index._coerce(tid)
    rec = index._txs.get(key)
    if rec is None:
        raise UnknownTx(f"transaction {TxId(key) if len(key) == 32 else tid} not indexed")
    tx = rec.tx
    is_coinbase = tx.inputs[0].previous.is_coinbase

    outputs = []
    out_total = 0
    for vout in range(len(tx.outputs)):
        info = index._outputs[(key, vout)]
        outputs.append((info.address, Amount(info.value), info.kind, info.op_return_payload))
        out_total += info.value

    inputs = []
    in_total = 0
    complete = True
    if is_coinbase:
        # subsidy plus fees; the sentinel input has no source address
        inputs.append((None, Amount(out_total)))
        fee = Amount(0)
    else:
        for inp in tx.inputs:
            info = index._outputs.get((bytes(inp.previous.txid), inp.previous.vout))
            if info is None:
                inputs.append((None, None))
                complete = False
            else:
                inputs.append((info.address, Amount(info.value)))
                in_total += info.value
        if complete:
            if in_total < out_total:
                raise ToolkitError(
                    f"transaction {TxId(key)} outputs exceed inputs by {out_total - in_total} sat"
                )
            fee = Amount(in_total - out_total)
        else:
            fee = None
    return ResolvedTransaction(
        TxId(key), tuple(inputs), tuple(outputs), fee,
        rec.time, rec.height, rec.index, is_coinbase,
    )


def resolve_all(index: LedgerIndex) -> Iterator[ResolvedTransaction]:
    for tid in index._order:
        yield resolve_transaction(index, tid)


def address_history(index: LedgerIndex, address: str) -> list:
    """Chronological (TxId, role, time) triples; empty for unseen addresses."""
    entries = index._address_map.get(address, [])
    return [(TxId(tid), role, time) for time, height, tx_index, tid, role in entries]


def save_index(index: LedgerIndex, path: str) -> None:
    state = {
        "network": index.network,
        "block_count": index.block_count,
        "txs": index._txs,
        "order": index._order,
        "outputs": index._outputs,
        "spent_by": index._spent_by,
        "address_map": index._address_map,
        "missing": index.missing,
    }
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        pickle.dump(state, fh, protocol=4)


def load_index(path: str) -> LedgerIndex:
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ToolkitError(f"{path}: not a ledger snapshot (bad header)")
        state = pickle.load(fh)
    index = LedgerIndex(state["network"])
    index.block_count = state["block_count"]
    index._txs = state["txs"]
    index._order = state["order"]
    index._outputs = state["outputs"]
    index._spent_by = state["spent_by"]
    index._address_map = state["address_map"]
    index.missing = state["missing"]
    return index


def export_outputs_csv(index: LedgerIndex, path: str) -> None:
    rows = []
    for (tid, vout), info in index._outputs.items():
        rows.append((TxId(tid).display, vout, info.value, info.address or "", info.kind.value))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        fh.write("#schema_version=1\n")
        writer = csv.writer(fh)
        writer.writerow(["txid", "vout", "value_sat", "address", "script_class"])
        writer.writerows(rows)
