import pytest
from hypothesis import given, strategies as st

from burntrace.codec import (base58check_decode, base58check_encode, bech32_decode,
                             bech32_encode)
from burntrace.errors import BadAlphabet, BadChecksum, ToolkitError


class TestBase58Check:
    def test_known_p2pkh(self):
        # BIP-style vector: version 0x00 plus genesis pubkey hash
        payload = bytes.fromhex("62e907b15cbf27d5425399ebf6f0fb50ebb88f18")
        assert base58check_encode(0, payload) == "1A1zP1eP5QGefi2DMPTfTL5SLmv7DivfNa"

    def test_round_trip_leading_zeros(self):
        version, payload = base58check_decode(base58check_encode(0, b"\x00\x00\x01"))
        assert version == 0 and payload == b"\x00\x00\x01"

    def test_checksum_rejected(self):
        addr = base58check_encode(0, b"\x01" * 20)
        corrupted = addr[:-1] + ("2" if addr[-1] != "2" else "3")
        with pytest.raises(BadChecksum):
            base58check_decode(corrupted)

    def test_alphabet_rejected(self):
        with pytest.raises(BadAlphabet):
            base58check_decode("1A1zP1eP5QGefi2DMPTfTL5SLmv7DOvfNa")  # capital O

    @given(version=st.integers(0, 255), payload=st.binary(min_size=0, max_size=40))
    def test_round_trip(self, version, payload):
        assert base58check_decode(base58check_encode(version, payload)) == (version, payload)


class TestBech32:
    def test_known_p2wpkh(self):
        # BIP-173 example address
        hrp, witver, prog = bech32_decode("bc1qw508d6qejxtdg4y5r3zarvary0c5xw7kv8f3t4")
        assert (hrp, witver) == ("bc", 0)
        assert prog.hex() == "751e76e8199196d454941c45d1b3a323f1433bd6"

    def test_known_p2tr_bech32m(self):
        hrp, witver, prog = bech32_decode(
            "bc1p0xlxvlhemja6c4dqv22uapctqupfhlxm9h8z3k2e72q4k9hcz7vqzk5jj0")
        assert (hrp, witver) == ("bc", 1)
        assert len(prog) == 32

    def test_case_mixing_rejected(self):
        with pytest.raises(ToolkitError):
            bech32_decode("bc1QW508d6qejxtdg4y5r3zarvary0c5xw7kv8f3t4")

    def test_checksum_rejected(self):
        with pytest.raises(BadChecksum):
            bech32_decode("bc1qw508d6qejxtdg4y5r3zarvary0c5xw7kv8f3t5")

    # v0 programs are pinned to 20 or 32 bytes (P2WPKH/P2WSH); later versions 2..40
    @given(spec=st.one_of(
        st.tuples(st.just(0), st.sampled_from([20, 32])),
        st.tuples(st.integers(1, 16), st.integers(2, 40))),
        data=st.data(), hrp=st.sampled_from(["bc", "tb", "bcrt"]))
    def test_round_trip(self, spec, data, hrp):
        witver, size = spec
        prog = data.draw(st.binary(min_size=size, max_size=size))
        assert bech32_decode(bech32_encode(hrp, witver, prog)) == (hrp, witver, prog)
