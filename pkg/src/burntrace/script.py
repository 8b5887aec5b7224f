"""Output-script classification, OP_RETURN payload handling, and addresses."""

import enum
import unicodedata
from dataclasses import dataclass
from typing import Optional

from .codec import base58check_decode, base58check_encode, bech32_decode, bech32_encode
from .errors import BadAddress, BadAlphabet, BadChecksum, MalformedPush
from .hashes import hash160

OP_RETURN = 0x6A
OP_RETURN_STANDARD_LIMIT = 80


class ScriptKind(str, enum.Enum):
    P2PKH = "P2PKH"
    P2SH = "P2SH"
    P2WPKH = "P2WPKH"
    P2WSH = "P2WSH"
    P2TR = "P2TR"
    P2PK = "P2PK"
    OP_RETURN = "OpReturn"
    NON_STANDARD = "NonStandard"


@dataclass(frozen=True)
class ScriptClass:
    kind: ScriptKind
    payload: bytes
    standard: bool = True
    # per-push breakdown for OP_RETURN debugging; None when pushes were malformed
    pushes: Optional[tuple] = None


@dataclass(frozen=True)
class Address:
    encoded: str
    kind: ScriptKind
    network: str

    def __str__(self) -> str:
        return self.encoded


@dataclass(frozen=True)
class CalloutText:
    raw: bytes
    decoded: str
    encoding: str  # "utf8" or "hex-fallback"


def _op_return_pushes(script: bytes) -> tuple:
    """Split the bytes after 0x6a into pushed items.

    Direct pushes 0x01-0x4b, OP_0 as an empty push, and OP_PUSHDATA1/2/4 are
    honored; any other opcode or a push running past the script end raises.
    """
    parts = []
    i = 1
    n = len(script)
    while i < n:
        op = script[i]
        i += 1
        if op == 0x00:
            parts.append(b"")
            continue
        if op <= 0x4B:
            length = op
        elif op == 0x4C:
            if i + 1 > n:
                raise MalformedPush("OP_PUSHDATA1 missing length byte")
            length = script[i]
            i += 1
        elif op == 0x4D:
            if i + 2 > n:
                raise MalformedPush("OP_PUSHDATA2 missing length bytes")
            length = int.from_bytes(script[i: i + 2], "little")
            i += 2
        elif op == 0x4E:
            if i + 4 > n:
                raise MalformedPush("OP_PUSHDATA4 missing length bytes")
            length = int.from_bytes(script[i: i + 4], "little")
            i += 4
        else:
            raise MalformedPush(f"non-push opcode 0x{op:02x} after OP_RETURN")
        if i + length > n:
            raise MalformedPush("push length exceeds remaining script bytes")
        parts.append(script[i: i + length])
        i += length
    return tuple(parts)


def extract_op_return_payload(script_pubkey: bytes) -> Optional[bytes]:
    """Concatenated pushed data after OP_RETURN, or None for other scripts."""
    if not script_pubkey or script_pubkey[0] != OP_RETURN:
        return None
    return b"".join(_op_return_pushes(script_pubkey))


def classify_script(script_pubkey: bytes) -> ScriptClass:
    """Match canonical output templates; total, never raises."""
    s = script_pubkey
    n = len(s)
    if n > 0 and s[0] == OP_RETURN:
        try:
            pushes = _op_return_pushes(s)
            payload = b"".join(pushes)
        except MalformedPush:
            # keep the OP_RETURN classification for forensics; raw tail kept
            pushes = None
            payload = s[1:]
        standard = len(payload) <= OP_RETURN_STANDARD_LIMIT and pushes is not None
        return ScriptClass(ScriptKind.OP_RETURN, payload, standard, pushes)
    if n == 25 and s[0] == 0x76 and s[1] == 0xA9 and s[2] == 0x14 and s[23] == 0x88 and s[24] == 0xAC:
        return ScriptClass(ScriptKind.P2PKH, s[3:23])
    if n == 23 and s[0] == 0xA9 and s[1] == 0x14 and s[22] == 0x87:
        return ScriptClass(ScriptKind.P2SH, s[2:22])
    if n == 22 and s[0] == 0x00 and s[1] == 0x14:
        return ScriptClass(ScriptKind.P2WPKH, s[2:])
    if n == 34 and s[0] == 0x00 and s[1] == 0x20:
        return ScriptClass(ScriptKind.P2WSH, s[2:])
    if n == 34 and s[0] == 0x51 and s[1] == 0x20:
        return ScriptClass(ScriptKind.P2TR, s[2:])
    if n == 35 and s[0] == 0x21 and s[34] == 0xAC:
        return ScriptClass(ScriptKind.P2PK, s[1:34])
    if n == 67 and s[0] == 0x41 and s[66] == 0xAC:
        return ScriptClass(ScriptKind.P2PK, s[1:66])
    return ScriptClass(ScriptKind.NON_STANDARD, b"")


def decode_payload_text(payload: bytes) -> CalloutText:
    """UTF-8 decode with NFC normalization; lowercase hex on failure.

    Trailing NUL padding is stripped before decoding so byte-padded messages
    still match the registry.
    """
    trimmed = payload.rstrip(b"\x00")
    try:
        decoded = unicodedata.normalize("NFC", trimmed.decode("utf-8"))
        return CalloutText(payload, decoded, "utf8")
    except UnicodeDecodeError:
        return CalloutText(payload, payload.hex(), "hex-fallback")


_BASE58_VERSION = {
    "mainnet": {ScriptKind.P2PKH: 0x00, ScriptKind.P2SH: 0x05},
    "regtest": {ScriptKind.P2PKH: 0x6F, ScriptKind.P2SH: 0xC4},
}
_HRP = {"mainnet": "bc", "regtest": "bcrt"}
_HRP_TO_NETWORK = {v: k for k, v in _HRP.items()}


def derive_address(cls: ScriptClass, network: str = "mainnet") -> Optional[Address]:
    """Human-readable address for a classified script, if it has one.

    P2PK keys are hashed and reported under the P2PKH address, matching
    common explorer practice. OP_RETURN and non-standard scripts have none.
    """
    kind = cls.kind
    if kind in (ScriptKind.OP_RETURN, ScriptKind.NON_STANDARD):
        return None
    if kind == ScriptKind.P2PK:
        encoded = base58check_encode(_BASE58_VERSION[network][ScriptKind.P2PKH], hash160(cls.payload))
        return Address(encoded, ScriptKind.P2PKH, network)
    if kind in (ScriptKind.P2PKH, ScriptKind.P2SH):
        return Address(base58check_encode(_BASE58_VERSION[network][kind], cls.payload), kind, network)
    if kind in (ScriptKind.P2WPKH, ScriptKind.P2WSH):
        return Address(bech32_encode(_HRP[network], 0, cls.payload), kind, network)
    if kind == ScriptKind.P2TR:
        return Address(bech32_encode(_HRP[network], 1, cls.payload), kind, network)
    return None


def parse_address(text: str) -> Address:
    """Validate an encoded address; raises BadAddress when nothing matches.

    Both mainnet and regtest forms are accepted, since synthetic fixtures
    carry regtest labels.
    """
    base58_error = None
    try:
        version, payload = base58check_decode(text)
    except (BadAlphabet, BadChecksum) as exc:
        base58_error = exc
    else:
        for network, versions in _BASE58_VERSION.items():
            for kind, v in versions.items():
                if version == v:
                    if len(payload) != 20:
                        raise BadAddress(f"{text!r}: payload is {len(payload)} bytes, expected 20")
                    return Address(text, kind, network)
        raise BadAddress(f"{text!r}: unknown base58 version byte 0x{version:02x}")
    try:
        hrp, witver, witprog = bech32_decode(text)
    except (BadAlphabet, BadChecksum, BadAddress) as exc:
        raise BadAddress(f"{text!r}: {base58_error}; {exc}") from exc
    network = _HRP_TO_NETWORK.get(hrp)
    if network is None:
        raise BadAddress(f"{text!r}: unknown address prefix {hrp!r}")
    if witver == 0:
        kind = ScriptKind.P2WPKH if len(witprog) == 20 else ScriptKind.P2WSH
    elif witver == 1 and len(witprog) == 32:
        kind = ScriptKind.P2TR
    else:
        raise BadAddress(f"{text!r}: unsupported witness version {witver}")
    return Address(text.lower(), kind, network)


def script_for_address_kind(kind: ScriptKind, payload: bytes) -> bytes:
    """Inverse of classify_script for the spendable template kinds."""
    if kind == ScriptKind.P2PKH:
        return b"\x76\xa9\x14" + payload + b"\x88\xac"
    if kind == ScriptKind.P2SH:
        return b"\xa9\x14" + payload + b"\x87"
    if kind == ScriptKind.P2WPKH:
        return b"\x00\x14" + payload
    if kind == ScriptKind.P2WSH:
        return b"\x00\x20" + payload
    if kind == ScriptKind.P2TR:
        return b"\x51\x20" + payload
    raise BadAddress(f"no script template for {kind}")


def op_return_script(payload: bytes) -> bytes:
    """Build an OP_RETURN script with a single canonical push."""
    if len(payload) == 0:
        return bytes([OP_RETURN])
    if len(payload) <= 0x4B:
        return bytes([OP_RETURN, len(payload)]) + payload
    if len(payload) <= 0xFF:
        return bytes([OP_RETURN, 0x4C, len(payload)]) + payload
    return bytes([OP_RETURN, 0x4D]) + len(payload).to_bytes(2, "little") + payload
