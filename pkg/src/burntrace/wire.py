"""Byte-exact Bitcoin wire (de)serialization.

Covers CompactSize integers, legacy and SegWit transactions, block headers,
and the framed blk*.dat record format. Parsing is strict: non-minimal
CompactSize encodings and spurious SegWit markers are rejected rather than
normalized, so accepted inputs always round-trip bit-exactly.
"""

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Optional, Sequence

from .errors import (
    BadMagic,
    LengthMismatch,
    NonMinimal,
    ToolkitError,
    TrailingBytes,
    Truncated,
)
from .hashes import sha256d

MAX_MONEY = 21_000_000 * 100_000_000

NETWORK_MAGIC = {
    "mainnet": b"\xf9\xbe\xb4\xd9",
    "regtest": b"\xfa\xbf\xb5\xda",
}

# guard against corrupt length fields in block framing
MAX_BLOCK_PAYLOAD = 8 * 1024 * 1024

COINBASE_TXID = b"\x00" * 32
COINBASE_VOUT = 0xFFFFFFFF


class Amount(int):
    """Satoshi quantity, bounded by the 21M BTC money supply."""

    def __new__(cls, value: int) -> "Amount":
        value = int(value)
        if value < 0 or value > MAX_MONEY:
            raise ToolkitError(f"amount {value} outside [0, {MAX_MONEY}]")
        return super().__new__(cls, value)

    def __add__(self, other):
        return Amount(int(self) + int(other))

    def __sub__(self, other):
        return Amount(int(self) - int(other))

    @property
    def btc(self) -> str:
        whole, frac = divmod(int(self), 100_000_000)
        return f"{whole}.{frac:08d}"


class TxId(bytes):
    """32-byte transaction hash; displayed in byte-reversed hex."""

    def __new__(cls, raw: bytes) -> "TxId":
        if len(raw) != 32:
            raise ToolkitError("txid must be 32 bytes")
        return super().__new__(cls, raw)

    @classmethod
    def from_hex(cls, display: str) -> "TxId":
        return cls(bytes.fromhex(display)[::-1])

    @property
    def display(self) -> str:
        return self[::-1].hex()

    def __str__(self) -> str:
        return self.display


@dataclass(frozen=True)
class OutPoint:
    txid: TxId
    vout: int

    @property
    def is_coinbase(self) -> bool:
        return bytes(self.txid) == COINBASE_TXID and self.vout == COINBASE_VOUT

    def __str__(self) -> str:
        return f"{self.txid.display}:{self.vout}"


@dataclass(frozen=True)
class TxInput:
    previous: OutPoint
    script_sig: bytes
    sequence: int
    witness: tuple = ()


@dataclass(frozen=True)
class TxOutput:
    value: Amount
    script_pubkey: bytes


@dataclass(frozen=True)
class Transaction:
    version: int
    inputs: tuple
    outputs: tuple
    locktime: int
    has_witness: bool = False

    def __post_init__(self):
        if not self.inputs or not self.outputs:
            raise ToolkitError("transaction needs at least one input and one output")
        any_wit = any(inp.witness for inp in self.inputs)
        if self.has_witness != any_wit:
            raise ToolkitError("has_witness flag disagrees with witness contents")


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    merkle_root: bytes
    time: int
    bits: int
    nonce: int


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple

    def __post_init__(self):
        if not self.transactions:
            raise ToolkitError("block has no transactions")
        if not self.transactions[0].inputs[0].previous.is_coinbase:
            raise ToolkitError("first transaction in a block must be coinbase")
        for tx in self.transactions[1:]:
            if any(inp.previous.is_coinbase for inp in tx.inputs):
                raise ToolkitError("coinbase input outside the first transaction")


def read_varint(buf: bytes, offset: int) -> tuple[int, int]:
    """Decode a CompactSize integer at offset; returns (value, next offset).

    Non-minimal encodings are an error, never silently normalized.
    """
    if offset >= len(buf):
        raise Truncated("varint at end of input")
    first = buf[offset]
    if first < 0xFD:
        return first, offset + 1
    widths = {0xFD: 2, 0xFE: 4, 0xFF: 8}
    floors = {0xFD: 0xFD, 0xFE: 0x1_0000, 0xFF: 0x1_0000_0000}
    width = widths[first]
    end = offset + 1 + width
    if end > len(buf):
        raise Truncated("varint extension truncated")
    value = int.from_bytes(buf[offset + 1: end], "little")
    if value < floors[first]:
        raise NonMinimal(f"varint {value} encoded with {width}-byte extension")
    return value, end


def write_varint(value: int) -> bytes:
    if value < 0:
        raise ToolkitError("varint cannot be negative")
    if value < 0xFD:
        return bytes([value])
    if value <= 0xFFFF:
        return b"\xfd" + value.to_bytes(2, "little")
    if value <= 0xFFFF_FFFF:
        return b"\xfe" + value.to_bytes(4, "little")
    return b"\xff" + value.to_bytes(8, "little")


def _take(buf: bytes, offset: int, n: int, what: str) -> tuple[bytes, int]:
    end = offset + n
    if end > len(buf):
        raise Truncated(f"{what} truncated")
    return buf[offset:end], end


def _parse_tx_at(buf: bytes, offset: int) -> tuple[Transaction, int]:
    raw, offset = _take(buf, offset, 4, "version")
    version = struct.unpack("<i", raw)[0]

    n_in, probe = read_varint(buf, offset)
    segwit = False
    if n_in == 0:
        # legacy transactions cannot have zero inputs; this is the marker byte
        flag, probe = _take(buf, probe, 1, "segwit flag")
        if flag != b"\x01":
            raise NonMinimal(f"unsupported segwit flag 0x{flag.hex()}")
        segwit = True
        n_in, probe = read_varint(buf, probe)
        if n_in == 0:
            raise Truncated("segwit transaction with zero inputs")
    offset = probe

    inputs = []
    for _ in range(n_in):
        raw, offset = _take(buf, offset, 36, "outpoint")
        txid = TxId(raw[:32])
        vout = int.from_bytes(raw[32:], "little")
        slen, offset = read_varint(buf, offset)
        sig, offset = _take(buf, offset, slen, "scriptSig")
        raw, offset = _take(buf, offset, 4, "sequence")
        inputs.append(TxInput(OutPoint(txid, vout), sig, int.from_bytes(raw, "little")))

    n_out, offset = read_varint(buf, offset)
    if n_out == 0:
        raise Truncated("transaction with zero outputs")
    outputs = []
    for _ in range(n_out):
        raw, offset = _take(buf, offset, 8, "output value")
        value = int.from_bytes(raw, "little")
        plen, offset = read_varint(buf, offset)
        spk, offset = _take(buf, offset, plen, "scriptPubKey")
        outputs.append(TxOutput(Amount(value), spk))

    has_witness = False
    if segwit:
        for i in range(n_in):
            n_items, offset = read_varint(buf, offset)
            items = []
            for _ in range(n_items):
                ilen, offset = read_varint(buf, offset)
                item, offset = _take(buf, offset, ilen, "witness item")
                items.append(item)
            if items:
                has_witness = True
            inputs[i] = TxInput(
                inputs[i].previous, inputs[i].script_sig, inputs[i].sequence, tuple(items)
            )
        if not has_witness:
            raise NonMinimal("segwit marker present but all witness stacks empty")

    raw, offset = _take(buf, offset, 4, "locktime")
    locktime = int.from_bytes(raw, "little")
    tx = Transaction(version, tuple(inputs), tuple(outputs), locktime, has_witness)
    return tx, offset


def parse_transaction(buf: bytes) -> Transaction:
    """Parse exactly one serialized transaction; trailing bytes are an error."""
    tx, end = _parse_tx_at(buf, 0)
    if end != len(buf):
        raise TrailingBytes(f"{len(buf) - end} bytes after transaction")
    return tx


def serialize_transaction(tx: Transaction, include_witness: bool = True) -> bytes:
    out = [struct.pack("<i", tx.version)]
    witness = include_witness and tx.has_witness
    if witness:
        out.append(b"\x00\x01")
    out.append(write_varint(len(tx.inputs)))
    for inp in tx.inputs:
        out.append(bytes(inp.previous.txid))
        out.append(inp.previous.vout.to_bytes(4, "little"))
        out.append(write_varint(len(inp.script_sig)))
        out.append(inp.script_sig)
        out.append(inp.sequence.to_bytes(4, "little"))
    out.append(write_varint(len(tx.outputs)))
    for o in tx.outputs:
        out.append(int(o.value).to_bytes(8, "little"))
        out.append(write_varint(len(o.script_pubkey)))
        out.append(o.script_pubkey)
    if witness:
        for inp in tx.inputs:
            out.append(write_varint(len(inp.witness)))
            for item in inp.witness:
                out.append(write_varint(len(item)))
                out.append(item)
    out.append(tx.locktime.to_bytes(4, "little"))
    return b"".join(out)


def txid(tx: Transaction) -> TxId:
    """Double SHA-256 of the witness-stripped serialization."""
    return TxId(sha256d(serialize_transaction(tx, include_witness=False)))


def wtxid(tx: Transaction) -> TxId:
    return TxId(sha256d(serialize_transaction(tx, include_witness=True)))


def serialize_header(h: BlockHeader) -> bytes:
    return b"".join(
        [
            struct.pack("<i", h.version),
            h.prev_hash,
            h.merkle_root,
            h.time.to_bytes(4, "little"),
            h.bits.to_bytes(4, "little"),
            h.nonce.to_bytes(4, "little"),
        ]
    )


def block_hash(h: BlockHeader) -> bytes:
    return sha256d(serialize_header(h))


def merkle_root(transactions: Sequence[Transaction]) -> bytes:
    level = [bytes(txid(tx)) for tx in transactions]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256d(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def parse_block(payload: bytes) -> Block:
    """Parse one block payload; the payload must be consumed exactly."""
    raw, offset = _take(payload, 0, 80, "block header")
    header = BlockHeader(
        version=struct.unpack("<i", raw[0:4])[0],
        prev_hash=raw[4:36],
        merkle_root=raw[36:68],
        time=int.from_bytes(raw[68:72], "little"),
        bits=int.from_bytes(raw[72:76], "little"),
        nonce=int.from_bytes(raw[76:80], "little"),
    )
    n_tx, offset = read_varint(payload, offset)
    txs = []
    for _ in range(n_tx):
        tx, offset = _parse_tx_at(payload, offset)
        txs.append(tx)
    if offset != len(payload):
        raise LengthMismatch(f"{len(payload) - offset} bytes after last transaction")
    return Block(header, tuple(txs))


def serialize_block(block: Block) -> bytes:
    out = [serialize_header(block.header), write_varint(len(block.transactions))]
    out.extend(serialize_transaction(tx) for tx in block.transactions)
    return b"".join(out)


def verify_merkle(block: Block) -> bool:
    """Optional integrity check; not applied during normal parsing."""
    return merkle_root(block.transactions) == block.header.merkle_root


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise Truncated(f"stream ended {remaining} bytes early")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def parse_block_file(stream: BinaryIO, network: str = "mainnet") -> Iterator[Block]:
    """Yield blocks from a blk*.dat-framed stream.

    Records are (magic, u32le length, payload); zero-padding runs between
    records are skipped. Chunked reads are handled, so the caller may pass
    any binary file object.
    """
    if network not in NETWORK_MAGIC:
        raise ToolkitError(f"unknown network {network!r}")
    magic = NETWORK_MAGIC[network]
    while True:
        lead = stream.read(1)
        if not lead:
            return
        if lead == b"\x00":
            continue
        head = lead + _read_exact(stream, 3)
        if head != magic:
            raise BadMagic(f"expected magic {magic.hex()}, found {head.hex()}")
        length = int.from_bytes(_read_exact(stream, 4), "little")
        if length > MAX_BLOCK_PAYLOAD:
            raise LengthMismatch(f"payload length {length} exceeds {MAX_BLOCK_PAYLOAD}")
        payload = _read_exact(stream, length)
        yield parse_block(payload)


def frame_block(payload: bytes, network: str) -> bytes:
    return NETWORK_MAGIC[network] + len(payload).to_bytes(4, "little") + payload
