"""Base58check and bech32/bech32m codecs for Bitcoin addresses."""

from .errors import BadAddress, BadAlphabet, BadChecksum
from .hashes import sha256d

_B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(_B58_ALPHABET)}


def base58check_encode(version: int, payload: bytes) -> str:
    data = bytes([version]) + payload
    data += sha256d(data)[:4]
    n = int.from_bytes(data, "big")
    out = []
    while n:
        n, rem = divmod(n, 58)
        out.append(_B58_ALPHABET[rem])
    # leading zero bytes map to leading '1' characters
    pad = 0
    for b in data:
        if b:
            break
        pad += 1
    return "1" * pad + "".join(reversed(out))


def base58check_decode(text: str) -> tuple[int, bytes]:
    """Decode to (version byte, payload), verifying the 4-byte checksum."""
    if not text:
        raise BadAlphabet("empty base58 string")
    n = 0
    for c in text:
        if c not in _B58_INDEX:
            raise BadAlphabet(f"character {c!r} not in base58 alphabet")
        n = n * 58 + _B58_INDEX[c]
    pad = 0
    for c in text:
        if c != "1":
            break
        pad += 1
    body = n.to_bytes((n.bit_length() + 7) // 8, "big") if n else b""
    data = b"\x00" * pad + body
    if len(data) < 5:
        raise BadChecksum("decoded data too short for a checksum")
    payload, check = data[:-4], data[-4:]
    if sha256d(payload)[:4] != check:
        raise BadChecksum("base58check checksum mismatch")
    return payload[0], payload[1:]


_BECH_CHARSET = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"
_BECH_INDEX = {c: i for i, c in enumerate(_BECH_CHARSET)}
_BECH32M_CONST = 0x2BC830A3


def _polymod(values) -> int:
    gen = (0x3B6A57B2, 0x26508E6D, 0x1EA119FA, 0x3D4233DD, 0x2A1462B3)
    chk = 1
    for v in values:
        top = chk >> 25
        chk = ((chk & 0x1FFFFFF) << 5) ^ v
        for i in range(5):
            chk ^= gen[i] if (top >> i) & 1 else 0
    return chk


def _hrp_expand(hrp: str) -> list[int]:
    return [ord(c) >> 5 for c in hrp] + [0] + [ord(c) & 31 for c in hrp]


def _convertbits(data, frombits: int, tobits: int, pad: bool) -> list[int]:
    acc = 0
    bits = 0
    out = []
    maxv = (1 << tobits) - 1
    for value in data:
        if value < 0 or value >> frombits:
            raise BadAddress("value out of range for bit regrouping")
        acc = (acc << frombits) | value
        bits += frombits
        while bits >= tobits:
            bits -= tobits
            out.append((acc >> bits) & maxv)
    if pad:
        if bits:
            out.append((acc << (tobits - bits)) & maxv)
    elif bits >= frombits or ((acc << (tobits - bits)) & maxv):
        raise BadAddress("non-zero padding in bit regrouping")
    return out


def bech32_encode(hrp: str, witver: int, witprog: bytes) -> str:
    """Encode a witness program; bech32 for version 0, bech32m otherwise."""
    const = 1 if witver == 0 else _BECH32M_CONST
    data = [witver] + _convertbits(witprog, 8, 5, True)
    values = _hrp_expand(hrp) + data
    polymod = _polymod(values + [0, 0, 0, 0, 0, 0]) ^ const
    checksum = [(polymod >> 5 * (5 - i)) & 31 for i in range(6)]
    return hrp + "1" + "".join(_BECH_CHARSET[d] for d in data + checksum)


def bech32_decode(addr: str) -> tuple[str, int, bytes]:
    """Decode a segwit address to (hrp, witness version, witness program)."""
    if addr.lower() != addr and addr.upper() != addr:
        raise BadAlphabet("mixed-case bech32 string")
    addr = addr.lower()
    pos = addr.rfind("1")
    if pos < 1 or pos + 7 > len(addr) or len(addr) > 90:
        raise BadAddress("malformed bech32 layout")
    hrp, rest = addr[:pos], addr[pos + 1:]
    for c in hrp:
        if not 33 <= ord(c) <= 126:
            raise BadAlphabet("hrp character out of range")
    data = []
    for c in rest:
        if c not in _BECH_INDEX:
            raise BadAlphabet(f"character {c!r} not in bech32 alphabet")
        data.append(_BECH_INDEX[c])
    if not data[1:-6]:
        raise BadAddress("empty witness data")
    witver = data[0]
    if witver > 16:
        raise BadAddress("witness version out of range")
    const = 1 if witver == 0 else _BECH32M_CONST
    if _polymod(_hrp_expand(hrp) + data) != const:
        raise BadChecksum("bech32 checksum mismatch")
    witprog = bytes(_convertbits(data[1:-6], 5, 8, False))
    if not 2 <= len(witprog) <= 40:
        raise BadAddress("witness program length out of range")
    if witver == 0 and len(witprog) not in (20, 32):
        raise BadAddress("version 0 witness program must be 20 or 32 bytes")
    return hrp, witver, witprog
