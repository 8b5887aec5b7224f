"""Deterministic synthetic chain generator with ground-truth bookkeeping.

Builds a small regtest-framed chain embedding a configurable campaign:
funding peel chain, callout burns with receipts, dust payments, a fan-out,
donation transactions, counterparty spends, plus unrelated OP_RETURN noise.
Everything derives from the scenario seed through SHA-256; there is no RNG,
so a fixed scenario yields bit-identical output.

The emitted GroundTruth is computed from the builder's own transaction
records, not by running the analysis pipeline, so the two can be diffed.
"""

import json
from dataclasses import dataclass, field
from datetime import date, datetime, time as dtime, timezone
from decimal import Decimal
from fractions import Fraction
from hashlib import sha256
from typing import Optional

from .analytics import tukey_outliers, usd_value
from .attrib import ENTITIES, brute_force_clusters
from .errors import BadConfig, InfeasibleScenario
from .script import ScriptKind, op_return_script, script_for_address_kind
from .wire import (Amount, Block, BlockHeader, COINBASE_TXID, COINBASE_VOUT, OutPoint,
                   Transaction, TxInput, TxOutput, TxId, frame_block, merkle_root,
                   serialize_block, txid as compute_txid)

SUBSIDY_SAT = 50 * 100_000_000

_CENT = Decimal("0.01")


# -- scenario ------------------------------------------------------------


@dataclass(frozen=True)
class ReceiptSpec:
    tx_index: int
    target: str            # "svr" | "fsb" | "fan"
    target_index: int
    value_sat: Optional[int]   # None only for "fan" (derived from the fan payment)


@dataclass(frozen=True)
class BurnEntry:
    date: date
    message_id: str
    tx_count: int
    total_sat: int
    source: str = "cycle"  # "cycle" | "star"
    receipts: tuple = ()


@dataclass(frozen=True)
class NoiseEntry:
    date: date
    tx_count: int
    total_sat: int


@dataclass(frozen=True)
class PaymentEntry:
    date: date
    entity: str
    tx_count: int
    per_output_sat: int
    fanout_width: int = 1
    source: str = "cycle"  # "cycle" | "fan"


@dataclass(frozen=True)
class FundingSpec:
    date: date
    amount_sat: int
    peel_hops: int


@dataclass(frozen=True)
class DonationSpec:
    date: date
    message_id: str
    tx_count: int
    total_outputs: int
    usd_to_donation: Decimal
    dust_sat: int
    final_change_sat: int


@dataclass(frozen=True)
class CounterpartySpec:
    date: date
    entity: str
    value_sat: int


@dataclass(frozen=True)
class ConsolidationSpec:
    date: date
    members: tuple  # pool indices; first member receives the merged value


@dataclass(frozen=True)
class ChainScenario:
    seed: int
    network: str
    fee_sat: int
    slack_sat: int
    prep_dates: tuple          # (coinbase-only date, funding-transaction date)
    pool_size: int
    pool_bech32: int
    cycle_extra: int
    svr_count: int
    fsb_count: int
    prices: tuple              # ((iso date, price string), ...)
    registry_doc: Optional[dict]
    funding: Optional[FundingSpec]
    burns: tuple
    noise_burns: tuple
    payments: tuple
    donation: Optional[DonationSpec]
    counterparties: tuple
    consolidations: tuple


def _need(doc: dict, key: str, kind=None):
    if key not in doc:
        raise BadConfig(f"scenario missing key {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise BadConfig(f"scenario key {key!r} has wrong type {type(value).__name__}")
    return value


def _parse_date(text) -> date:
    try:
        return date.fromisoformat(text)
    except (TypeError, ValueError) as exc:
        raise BadConfig(f"bad date {text!r}") from exc


def scenario_from_dict(doc: dict) -> ChainScenario:
    if not isinstance(doc, dict):
        raise BadConfig("scenario document must be an object")
    addresses = _need(doc, "addresses", dict)
    burns = []
    for entry in _need(doc, "burns", list):
        receipts = []
        for r in entry.get("receipts", ()):
            target = _need(r, "target", str)
            if target not in ("svr", "fsb", "fan"):
                raise BadConfig(f"unknown receipt target {target!r}")
            receipts.append(ReceiptSpec(
                _need(r, "tx_index", int), target, r.get("target_index", 0),
                r.get("value_sat")))
        source = entry.get("source", "cycle")
        if source not in ("cycle", "star"):
            raise BadConfig(f"unknown burn source {source!r}")
        burns.append(BurnEntry(
            _parse_date(_need(entry, "date")), _need(entry, "message_id", str),
            _need(entry, "tx_count", int), _need(entry, "total_sat", int),
            source, tuple(receipts)))
    noise = [NoiseEntry(_parse_date(_need(e, "date")), _need(e, "tx_count", int),
                        _need(e, "total_sat", int))
             for e in doc.get("noise_burns", ())]
    payments = []
    for entry in doc.get("payments", ()):
        entity = _need(entry, "entity", str)
        if entity not in ENTITIES:
            raise BadConfig(f"unknown entity {entity!r}")
        if entity not in ("GRU", "SVR", "FSB"):
            raise BadConfig(f"no synthetic recipient roster for entity {entity!r}")
        source = entry.get("source", "cycle")
        if source not in ("cycle", "fan"):
            raise BadConfig(f"unknown payment source {source!r}")
        payments.append(PaymentEntry(
            _parse_date(_need(entry, "date")), entity, _need(entry, "tx_count", int),
            _need(entry, "per_output_sat", int), entry.get("fanout_width", 1), source))
    funding = None
    if doc.get("funding") is not None:
        f = doc["funding"]
        funding = FundingSpec(_parse_date(_need(f, "date")), _need(f, "amount_sat", int),
                              _need(f, "peel_hops", int))
    donation = None
    if doc.get("donation") is not None:
        d = doc["donation"]
        try:
            usd = Decimal(_need(d, "usd_to_donation", str))
        except ArithmeticError as exc:
            raise BadConfig("bad usd_to_donation") from exc
        donation = DonationSpec(
            _parse_date(_need(d, "date")), _need(d, "message_id", str),
            _need(d, "tx_count", int), _need(d, "total_outputs", int),
            usd, _need(d, "dust_sat", int), _need(d, "final_change_sat", int))
    counterparties = []
    for entry in doc.get("counterparties", ()):
        entity = _need(entry, "entity", str)
        if entity not in ENTITIES:
            raise BadConfig(f"unknown entity {entity!r}")
        counterparties.append(CounterpartySpec(
            _parse_date(_need(entry, "date")), entity, _need(entry, "value_sat", int)))
    consolidations = [
        ConsolidationSpec(_parse_date(_need(e, "date")), tuple(_need(e, "members", list)))
        for e in doc.get("consolidations", ())
    ]
    prep = doc.get("prep_dates")
    if not isinstance(prep, list) or len(prep) != 2:
        raise BadConfig("prep_dates must list exactly two dates")
    prices = []
    for row in _need(doc, "prices", list):
        if not isinstance(row, list) or len(row) != 2:
            raise BadConfig(f"bad price row {row!r}")
        _parse_date(row[0])
        prices.append((row[0], str(row[1])))
    scenario = ChainScenario(
        seed=_need(doc, "seed", int),
        network=doc.get("network", "regtest"),
        fee_sat=doc.get("fee_sat", 1000),
        slack_sat=doc.get("slack_sat", 10_000),
        prep_dates=(_parse_date(prep[0]), _parse_date(prep[1])),
        pool_size=_need(addresses, "pool", int),
        pool_bech32=addresses.get("pool_bech32", 0),
        cycle_extra=addresses.get("cycle_extra", 0),
        svr_count=addresses.get("svr", 0),
        fsb_count=addresses.get("fsb", 0),
        prices=tuple(prices),
        registry_doc=doc.get("registry"),
        funding=funding,
        burns=tuple(burns),
        noise_burns=tuple(noise),
        payments=tuple(payments),
        donation=donation,
        counterparties=tuple(counterparties),
        consolidations=tuple(consolidations),
    )
    _registry_texts(scenario)  # validates message references early
    return scenario


def scenario_from_file(path: str) -> ChainScenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadConfig(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(s: ChainScenario) -> dict:
    doc = {
        "schema_version": 1,
        "seed": s.seed,
        "network": s.network,
        "fee_sat": s.fee_sat,
        "slack_sat": s.slack_sat,
        "prep_dates": [d.isoformat() for d in s.prep_dates],
        "addresses": {"pool": s.pool_size, "pool_bech32": s.pool_bech32,
                      "cycle_extra": s.cycle_extra, "svr": s.svr_count, "fsb": s.fsb_count},
        "prices": [list(row) for row in s.prices],
        "registry": s.registry_doc,
        "funding": None,
        "burns": [
            {"date": b.date.isoformat(), "message_id": b.message_id,
             "tx_count": b.tx_count, "total_sat": b.total_sat, "source": b.source,
             "receipts": [
                 {"tx_index": r.tx_index, "target": r.target,
                  "target_index": r.target_index, "value_sat": r.value_sat}
                 for r in b.receipts]}
            for b in s.burns],
        "noise_burns": [
            {"date": n.date.isoformat(), "tx_count": n.tx_count, "total_sat": n.total_sat}
            for n in s.noise_burns],
        "payments": [
            {"date": p.date.isoformat(), "entity": p.entity, "tx_count": p.tx_count,
             "per_output_sat": p.per_output_sat, "fanout_width": p.fanout_width,
             "source": p.source}
            for p in s.payments],
        "donation": None,
        "counterparties": [
            {"date": c.date.isoformat(), "entity": c.entity, "value_sat": c.value_sat}
            for c in s.counterparties],
        "consolidations": [
            {"date": c.date.isoformat(), "members": list(c.members)}
            for c in s.consolidations],
    }
    if s.funding is not None:
        doc["funding"] = {"date": s.funding.date.isoformat(),
                          "amount_sat": s.funding.amount_sat,
                          "peel_hops": s.funding.peel_hops}
    if s.donation is not None:
        d = s.donation
        doc["donation"] = {"date": d.date.isoformat(), "message_id": d.message_id,
                           "tx_count": d.tx_count, "total_outputs": d.total_outputs,
                           "usd_to_donation": str(d.usd_to_donation),
                           "dust_sat": d.dust_sat, "final_change_sat": d.final_change_sat}
    return doc


def _registry_texts(s: ChainScenario) -> dict:
    """message_id -> (payload text, sender, receiver); validates references."""
    doc = s.registry_doc
    if doc is None:
        from .attrib import default_registry
        registry = default_registry()
    else:
        from .attrib import MessageRegistry
        registry = MessageRegistry.from_dict(doc)
    table = {m.message_id: (m.text, m.sender, m.receiver) for m in registry.messages}
    for entry in s.burns:
        if entry.message_id not in table:
            raise BadConfig(f"burn references unknown message {entry.message_id!r}")
    if s.donation is not None:
        if s.donation.message_id not in table:
            raise BadConfig(f"donation references unknown message {s.donation.message_id!r}")
        if table[s.donation.message_id][2] != "DONATION":
            raise BadConfig("donation message must name a DONATION receiver")
    return table


# -- build ---------------------------------------------------------------


@dataclass(frozen=True)
class _Addr:
    address: str
    script: bytes
    kind: ScriptKind
    payload: bytes


@dataclass
class _Utxo:
    txid: TxId
    vout: int
    value: int
    owner: _Addr


@dataclass
class _TxMeta:
    txid: TxId
    time: int
    day: date
    category: str
    message_id: Optional[str]
    inputs: list    # (address | None, value)
    outputs: list   # (address | None, value, is_opret)


def _split_even(total: int, count: int, what: str) -> list:
    """Even split, remainder on the last element; every part must be >= 1."""
    if count <= 0:
        raise InfeasibleScenario(f"{what}: transaction count must be positive")
    if total < count:
        raise InfeasibleScenario(
            f"{what}: {total} satoshis cannot cover {count} transactions of >= 1 satoshi")
    base = total // count
    parts = [base] * count
    parts[-1] += total - base * count
    return parts


def _noon(day: date) -> int:
    return int(datetime.combine(day, dtime(12, 0), tzinfo=timezone.utc).timestamp())


class _Builder:
    def __init__(self, scenario: ChainScenario):
        self.s = scenario
        self.fee = scenario.fee_sat
        self.messages = _registry_texts(scenario)
        self.store: dict = {}
        self.blocks: list = []
        self.prev_hash = b"\x00" * 32
        self.meta: list = []
        self.cycle_pos = 0
        self.pay_counter: dict = {}
        self.peel_hops: list = []
        self._addr_cache: dict = {}
        self._validate()
        self._make_roster()

    # -- addresses --------------------------------------------------------

    def _derive(self, role: str, kind: ScriptKind) -> _Addr:
        cached = self._addr_cache.get(role)
        if cached is not None:
            return cached
        payload = sha256(f"{self.s.seed}:{role}".encode()).digest()[:20]
        script = script_for_address_kind(kind, payload)
        from .script import classify_script, derive_address
        addr = derive_address(classify_script(script), self.s.network)
        made = _Addr(addr.encoded, script, kind, payload)
        self._addr_cache[role] = made
        return made

    def _make_roster(self) -> None:
        s = self.s
        self.miner = self._derive("miner", ScriptKind.P2PKH)
        self.pool = [
            self._derive(f"pool:{i}",
                         ScriptKind.P2WPKH if i < s.pool_bech32 else ScriptKind.P2PKH)
            for i in range(s.pool_size)
        ]
        self.cycle = self.pool + [self._derive(f"cycle-extra:{i}", ScriptKind.P2PKH)
                                  for i in range(s.cycle_extra)]
        self.star = self._derive("star", ScriptKind.P2PKH)
        self.fan = self._derive("fan", ScriptKind.P2PKH)
        self.svr = [self._derive(f"svr:{i}", ScriptKind.P2PKH) for i in range(s.svr_count)]
        self.fsb = [self._derive(f"fsb:{i}", ScriptKind.P2PKH) for i in range(s.fsb_count)]
        self.mixer = self._derive("mixer", ScriptKind.P2PKH)
        self.source = self._derive("funding-source", ScriptKind.P2PKH)
        self.donation_addr = self._derive("donation", ScriptKind.P2PKH)
        self.cp_addr = {c.entity: self._derive(f"cp:{c.entity}", ScriptKind.P2PKH)
                        for c in s.counterparties}
        self.noise_addr = {}
        for e, entry in enumerate(s.noise_burns):
            for t in range(entry.tx_count):
                self.noise_addr[(e, t)] = self._derive(f"noise:{e}:{t}", ScriptKind.P2PKH)

    def _roster_for(self, entity: str) -> list:
        return {"GRU": self.pool, "SVR": self.svr, "FSB": self.fsb}[entity]

    # -- validation and planning ------------------------------------------

    def _validate(self) -> None:
        s = self.s
        err = InfeasibleScenario
        if s.fee_sat < 0 or s.slack_sat < 1:
            raise err("fee must be >= 0 and slack >= 1 satoshi")
        activity_dates = self._activity_dates()
        if activity_dates:
            if not (s.prep_dates[0] < s.prep_dates[1] < min(activity_dates)):
                raise err("prep dates must strictly precede all activity dates")
        cycle_needed = any(b.source == "cycle" for b in s.burns)
        if cycle_needed and s.pool_size + s.cycle_extra < 1:
            raise err("cycle burns need at least one pool address")
        self.burn_amounts = [
            _split_even(b.total_sat, b.tx_count, f"burn[{i}] {b.message_id}")
            for i, b in enumerate(s.burns)]
        self.noise_amounts = [
            _split_even(n.total_sat, n.tx_count, f"noise[{i}]")
            for i, n in enumerate(s.noise_burns)]
        # the funding plan pre-computes cycle positions and payment counters,
        # so burns and payments must build in the order they are listed
        for name, seq in (("burns", s.burns), ("payments", s.payments)):
            dates = [e.date for e in seq]
            if dates != sorted(dates):
                raise err(f"{name} must be listed in date order")
        if s.consolidations and s.burns:
            last_burn = max(b.date for b in s.burns)
            for i, c in enumerate(s.consolidations):
                if c.date <= last_burn:
                    raise err(f"consolidation[{i}] must come after the last burn day")
        fan_entries = [p for p in s.payments if p.source == "fan"]
        if len(fan_entries) > 1:
            raise err("at most one fan-sourced payment entry is supported")
        if fan_entries and fan_entries[0].tx_count != 1:
            raise err("the fan-sourced payment entry must hold exactly one transaction")
        for i, p in enumerate(s.payments):
            if p.per_output_sat < 1 or p.fanout_width < 1 or p.tx_count < 1:
                raise err(f"payment[{i}]: counts and amounts must be positive")
            if p.source == "cycle" and s.pool_size < 1:
                raise err(f"payment[{i}]: cycle payments need pool addresses")
            if not self._roster_size(p.entity):
                raise err(f"payment[{i}]: no {p.entity} addresses configured")
        fan_receipts = [(b, r) for b in s.burns for r in b.receipts if r.target == "fan"]
        if fan_entries and not fan_receipts:
            raise err("fan payment configured but no burn receipt funds the fan address")
        if fan_receipts and not fan_entries:
            raise err("fan receipt configured but no fan payment spends it")
        if len(fan_receipts) > 1:
            raise err("at most one fan receipt is supported")
        if fan_receipts:
            burn_entry, receipt = fan_receipts[0]
            if receipt.value_sat is not None:
                raise err("fan receipt value is derived from the fan payment; use null")
            if burn_entry.date > fan_entries[0].date:
                raise err("fan receipt must land on or before the fan payment day")
        for b_index, b in enumerate(s.burns):
            for r in b.receipts:
                if not 0 <= r.tx_index < b.tx_count:
                    raise err(f"burn[{b_index}] receipt tx_index {r.tx_index} out of range")
                if r.target == "svr" and not 0 <= r.target_index < s.svr_count:
                    raise err(f"burn[{b_index}] receipt svr index out of range")
                if r.target == "fsb" and not 0 <= r.target_index < s.fsb_count:
                    raise err(f"burn[{b_index}] receipt fsb index out of range")
                if r.target != "fan" and (r.value_sat is None or r.value_sat < 1):
                    raise err(f"burn[{b_index}] receipt needs a positive value_sat")
        if s.funding is not None:
            cur = s.funding.amount_sat
            if cur < 1 or s.funding.peel_hops < 0:
                raise err("funding amount must be positive, hops non-negative")
            for _hop in range(s.funding.peel_hops):
                peel = cur // 5
                cont = cur - peel - s.fee_sat
                if cont <= peel or peel < 1:
                    raise err("peel chain collapses below the fee; reduce hops or raise amount")
                cur = cont
            if s.funding.peel_hops and s.pool_size < 1:
                raise err("peel chain terminates at a pool address; none configured")
        if s.donation is not None:
            d = s.donation
            if d.tx_count < 1 or d.dust_sat < 1 or d.final_change_sat < 1:
                raise err("donation counts and amounts must be positive")
            if d.tx_count > s.pool_size:
                raise err("donation senders exceed pool size")
            per_tx_usd = d.usd_to_donation / d.tx_count
            if per_tx_usd.quantize(_CENT) != per_tx_usd:
                raise err("usd_to_donation does not divide into whole cents per transaction")
            price = self._price_for(d.date)
            sat = Fraction(per_tx_usd) * 100_000_000 / Fraction(price)
            if sat.denominator != 1 or sat.numerator < 1:
                raise err(
                    f"per-transaction donation of {per_tx_usd} USD is not a whole satoshi "
                    f"amount at {price} USD/BTC")
            self.donation_sat = int(sat)
            dusts = d.total_outputs - 2 * d.tx_count - 1
            if dusts < 0:
                raise err("donation total_outputs too small for the transaction count")
            base, rem = divmod(dusts, d.tx_count)
            self.donation_dust_counts = [base + (1 if i < rem else 0)
                                         for i in range(d.tx_count)]
        seen: set = set()
        for i, c in enumerate(s.consolidations):
            if len(c.members) < 2 or len(set(c.members)) != len(c.members):
                raise err(f"consolidation[{i}] needs >= 2 distinct members")
            for m in c.members:
                if not 0 <= m < s.pool_size:
                    raise err(f"consolidation[{i}] member {m} outside pool")
                if m in seen:
                    raise err(f"pool address {m} consolidated twice")
                seen.add(m)
        for i, c in enumerate(s.counterparties):
            if c.value_sat < 1:
                raise err(f"counterparty[{i}] value must be positive")
        price_days = {date.fromisoformat(d) for d, _ in s.prices}
        for day in activity_dates:
            if day not in price_days:
                raise err(f"price table does not cover activity date {day.isoformat()}")

    def _roster_size(self, entity: str) -> int:
        return {"GRU": self.s.pool_size, "SVR": self.s.svr_count,
                "FSB": self.s.fsb_count}[entity]

    def _price_for(self, day: date):
        for d, p in self.s.prices:
            if date.fromisoformat(d) == day:
                return Decimal(p)
        raise InfeasibleScenario(f"price table does not cover {day.isoformat()}")

    def _activity_dates(self) -> list:
        s = self.s
        days = set()
        if s.funding is not None:
            days.add(s.funding.date)
        for group in (s.burns, s.noise_burns, s.payments, s.counterparties,
                      s.consolidations):
            days.update(e.date for e in group)
        if s.donation is not None:
            days.add(s.donation.date)
        return sorted(days)

    # -- transaction assembly ---------------------------------------------

    def _sig(self, prev_txid: bytes, vout: int) -> bytes:
        out = sha256(f"{self.s.seed}:sig".encode() + prev_txid +
                     vout.to_bytes(4, "little")).digest()
        while len(out) < 71:
            out += sha256(out).digest()
        return out[:71]

    def _pubkey(self, owner: _Addr) -> bytes:
        return b"\x02" + sha256(f"{self.s.seed}:key".encode() + owner.payload).digest()

    def _make_tx(self, utxos: list, outputs: list, category: str,
                 message_id: Optional[str], block_time: int, block_day: date) -> Transaction:
        """outputs: list of (_Addr | None, value, script or None for address)."""
        ins = []
        witnesses = []
        for u in utxos:
            sig, key = self._sig(bytes(u.txid), u.vout), self._pubkey(u.owner)
            if u.owner.kind == ScriptKind.P2WPKH:
                ins.append(TxInput(OutPoint(u.txid, u.vout), b"", 0xFFFFFFFF, (sig, key)))
                witnesses.append(True)
            else:
                script_sig = bytes([len(sig)]) + sig + bytes([len(key)]) + key
                ins.append(TxInput(OutPoint(u.txid, u.vout), script_sig, 0xFFFFFFFF))
                witnesses.append(False)
        outs = []
        for owner, value, script in outputs:
            outs.append(TxOutput(Amount(value), script if script is not None else owner.script))
        total_in = sum(u.value for u in utxos)
        total_out = sum(int(o.value) for o in outs)
        if total_in - total_out != self.fee:
            raise InfeasibleScenario(
                f"{category}: fee mismatch ({total_in} in, {total_out} out)")
        tx = Transaction(2, tuple(ins), tuple(outs), 0, any(witnesses))
        tid = compute_txid(tx)
        self.meta.append(_TxMeta(
            tid, block_time, block_day, category, message_id,
            [(u.owner.address, u.value) for u in utxos],
            [(owner.address if owner is not None else None, int(value), script is not None)
             for owner, value, script in outputs]))
        return tx

    def _coinbase(self, height: int, tx_fees: int, block_time: int, block_day: date) -> Transaction:
        inp = TxInput(OutPoint(TxId(COINBASE_TXID), COINBASE_VOUT),
                      bytes([1, height]), 0xFFFFFFFF)
        value = SUBSIDY_SAT + tx_fees
        tx = Transaction(2, (inp,), (TxOutput(Amount(value), self.miner.script),), 0)
        self.meta.append(_TxMeta(
            compute_txid(tx), block_time, block_day, "coinbase", None,
            [(None, value)], [(self.miner.address, value, False)]))
        return tx

    def _flush_block(self, day: date, body: list) -> None:
        block_time = _noon(day)
        height = len(self.blocks)
        coinbase = self._coinbase(height, self.fee * len(body), block_time, day)
        txs = [coinbase] + body
        header = BlockHeader(0x20000000, self.prev_hash, merkle_root(txs),
                             block_time, 0x207FFFFF, 0)
        block = Block(header, tuple(txs))
        self.blocks.append(block)
        from .wire import block_hash
        self.prev_hash = block_hash(header)
        self.store[("coinbase", height)] = _Utxo(
            compute_txid(coinbase), 0, SUBSIDY_SAT + self.fee * len(body), self.miner)

    # -- the big funding transaction --------------------------------------

    def _fan_need(self) -> int:
        for p in self.s.payments:
            if p.source == "fan":
                return p.tx_count * p.fanout_width * p.per_output_sat + self.fee * p.tx_count
        return 0

    def _plan_funding_outputs(self) -> list:
        """(store key, owner, value) for every dedicated UTXO, fixed order."""
        s = self.s
        plan = []
        if s.funding is not None:
            plan.append((("source",), self.source, s.funding.amount_sat + self.fee))
        budgets: dict = {}
        order: list = []
        pos = 0
        for b_index, b in enumerate(s.burns):
            for t, amount in enumerate(self.burn_amounts[b_index]):
                if b.source == "star":
                    owner = self.star
                    key = ("star",)
                else:
                    owner = self.cycle[pos % len(self.cycle)]
                    pos += 1
                    key = ("chain", owner.address)
                receipts = sum(self._fan_need() if r.target == "fan" else r.value_sat
                               for r in b.receipts if r.tx_index == t)
                if key not in budgets:
                    budgets[key] = [owner, 0]
                    order.append(key)
                budgets[key][1] += amount + receipts + self.fee
        for key in order:
            owner, outflow = budgets[key]
            plan.append((key, owner, outflow + s.slack_sat))
        for e, entry in enumerate(s.noise_burns):
            for t, amount in enumerate(self.noise_amounts[e]):
                plan.append(((("noise", e, t)), self.noise_addr[(e, t)], amount + self.fee))
        counters: dict = {}
        for p_index, p in enumerate(s.payments):
            if p.source == "fan":
                for _ in range(p.tx_count):
                    counters[p.entity] = counters.get(p.entity, 0) + 1
                continue
            need = p.fanout_width * p.per_output_sat + self.fee
            for t in range(p.tx_count):
                j = counters.get(p.entity, 0)
                counters[p.entity] = j + 1
                owner = self.pool[j % s.pool_size]
                plan.append(((("payment", p_index, t)), owner, need))
        if s.donation is not None:
            d = s.donation
            for i in range(d.tx_count):
                value = self.donation_sat + self.donation_dust_counts[i] * d.dust_sat + self.fee
                if i == d.tx_count - 1:
                    value += d.final_change_sat
                plan.append(((("donation", i)), self.pool[i], value))
        if s.counterparties:
            total = sum(c.value_sat for c in s.counterparties)
            value = total + self.fee * len(s.counterparties) + s.slack_sat
            plan.append((("cp",), self.pool[0], value))
        return plan

    def _build_funding_tx(self, day: date) -> Transaction:
        plan = self._plan_funding_outputs()
        cb = self.store.pop(("coinbase", 0))
        total = sum(value for _, _, value in plan)
        change = cb.value - total - self.fee
        if change < 0:
            raise InfeasibleScenario(
                f"scenario needs {total + self.fee} satoshis but the funding coinbase "
                f"holds {cb.value}")
        outputs = [(owner, value, None) for _, owner, value in plan]
        if change > 0:
            outputs.append((self.miner, change, None))
        tx = self._make_tx([cb], outputs, "funding", None, _noon(day), day)
        tid = compute_txid(tx)
        for vout, (key, owner, value) in enumerate(plan):
            self.store[key] = _Utxo(tid, vout, value, owner)
        return tx

    # -- activity builders -------------------------------------------------

    def _build_peel(self, day: date) -> list:
        s = self.s
        t = _noon(day)
        txs = []
        u = self.store.pop(("source",))
        f_tx = self._make_tx([u], [(self.mixer, s.funding.amount_sat, None)],
                             "funding-deposit", None, t, day)
        self.funding_outpoint = (compute_txid(f_tx), 0)
        txs.append(f_tx)
        cur = s.funding.amount_sat
        hop_utxo = _Utxo(compute_txid(f_tx), 0, cur, self.mixer)
        for i in range(s.funding.peel_hops):
            peel = cur // 5
            cont = cur - peel - self.fee
            last = i == s.funding.peel_hops - 1
            w = self._derive(f"peel-w:{i}", ScriptKind.P2PKH)
            cont_owner = self.pool[0] if last else self._derive(f"peel-c:{i}", ScriptKind.P2PKH)
            tx = self._make_tx([hop_utxo],
                               [(w, peel, None), (cont_owner, cont, None)],
                               "peel", None, t, day)
            txs.append(tx)
            self.peel_hops.append(
                {"txid": compute_txid(tx).display, "vout": 1, "value_sat": cont,
                 "address": cont_owner.address})
            hop_utxo = _Utxo(compute_txid(tx), 1, cont, cont_owner)
            cur = cont
        return txs

    def _build_burns(self, b_index: int, entry: BurnEntry, day: date) -> list:
        t = _noon(day)
        txs = []
        payload = self.messages[entry.message_id][0].encode("utf-8")
        for tx_index, amount in enumerate(self.burn_amounts[b_index]):
            if entry.source == "star":
                key = ("star",)
            else:
                owner = self.cycle[self.cycle_pos % len(self.cycle)]
                self.cycle_pos += 1
                key = ("chain", owner.address)
            u = self.store[key]
            outputs = [(None, amount, op_return_script(payload))]
            receipt_total = 0
            fan_receipt_vout = None
            for r in entry.receipts:
                if r.tx_index != tx_index:
                    continue
                if r.target == "fan":
                    value = self._fan_need()
                    fan_receipt_vout = len(outputs)
                    target = self.fan
                else:
                    value = r.value_sat
                    target = (self.svr if r.target == "svr" else self.fsb)[r.target_index]
                outputs.append((target, value, None))
                receipt_total += value
            change = u.value - amount - receipt_total - self.fee
            outputs.append((u.owner, change, None))
            tx = self._make_tx([u], outputs, "burn", entry.message_id, t, day)
            tid = compute_txid(tx)
            self.store[key] = _Utxo(tid, len(outputs) - 1, change, u.owner)
            if fan_receipt_vout is not None:
                self.store[("fan",)] = _Utxo(tid, fan_receipt_vout, self._fan_need(), self.fan)
            txs.append(tx)
        return txs

    def _build_noise(self, e_index: int, entry: NoiseEntry, day: date) -> list:
        t = _noon(day)
        txs = []
        for tx_index, amount in enumerate(self.noise_amounts[e_index]):
            u = self.store.pop(("noise", e_index, tx_index))
            payload = f"telemetry {self.s.seed:08x} {e_index:02d}{tx_index:04d}".encode()
            txs.append(self._make_tx(
                [u], [(None, amount, op_return_script(payload))], "noise", None, t, day))
        return txs

    def _build_payments(self, p_index: int, entry: PaymentEntry, day: date) -> list:
        t = _noon(day)
        txs = []
        roster = self._roster_for(entry.entity)
        for tx_index in range(entry.tx_count):
            j = self.pay_counter.get(entry.entity, 0)
            self.pay_counter[entry.entity] = j + 1
            if entry.source == "fan":
                u = self.store.pop(("fan",))
            else:
                u = self.store.pop(("payment", p_index, tx_index))
            outputs = []
            for k in range(entry.fanout_width):
                recipient = roster[(j * entry.fanout_width + k) % len(roster)]
                outputs.append((recipient, entry.per_output_sat, None))
            txs.append(self._make_tx([u], outputs, "payment", None, t, day))
        return txs

    def _build_donations(self, day: date) -> list:
        d = self.s.donation
        t = _noon(day)
        payload = self.messages[d.message_id][0].encode("utf-8")
        txs = []
        for i in range(d.tx_count):
            u = self.store.pop(("donation", i))
            sender = self.pool[i]
            outputs = [(None, 0, op_return_script(payload)),
                       (self.donation_addr, self.donation_sat, None)]
            outputs.extend((sender, d.dust_sat, None)
                           for _ in range(self.donation_dust_counts[i]))
            if i == d.tx_count - 1:
                outputs.append((sender, d.final_change_sat, None))
            txs.append(self._make_tx([u], outputs, "donation", d.message_id, t, day))
        return txs

    def _build_consolidation(self, spec: ConsolidationSpec, day: date) -> Transaction:
        t = _noon(day)
        utxos = []
        for m in spec.members:
            key = ("chain", self.pool[m].address)
            if key not in self.store:
                raise InfeasibleScenario(
                    f"consolidation member {m} has no residual chain output")
            utxos.append(self.store.pop(key))
        merged = sum(u.value for u in utxos) - self.fee
        if merged < 1:
            raise InfeasibleScenario("consolidation residuals do not cover the fee")
        target = self.pool[spec.members[0]]
        tx = self._make_tx(utxos, [(target, merged, None)], "consolidation", None, t, day)
        self.store[("chain", target.address)] = _Utxo(compute_txid(tx), 0, merged, target)
        return tx

    def _build_counterparty(self, spec: CounterpartySpec, day: date) -> Transaction:
        t = _noon(day)
        u = self.store.pop(("cp",))
        change = u.value - spec.value_sat - self.fee
        if change < 1:
            raise InfeasibleScenario(
                f"counterparty chain exhausted before {spec.entity} payment")
        target = self.cp_addr[spec.entity]
        tx = self._make_tx([u], [(target, spec.value_sat, None), (u.owner, change, None)],
                           "counterparty", None, t, day)
        self.store[("cp",)] = _Utxo(compute_txid(tx), 1, change, u.owner)
        return tx

    # -- block schedule -----------------------------------------------------

    def build(self) -> None:
        s = self.s
        self._flush_block(s.prep_dates[0], [])
        self._flush_block(s.prep_dates[1], [self._build_funding_tx(s.prep_dates[1])])
        for day in self._activity_dates():
            body: list = []
            if s.funding is not None and s.funding.date == day:
                body.extend(self._build_peel(day))
            for b_index, entry in enumerate(s.burns):
                if entry.date == day:
                    body.extend(self._build_burns(b_index, entry, day))
            for e_index, entry in enumerate(s.noise_burns):
                if entry.date == day:
                    body.extend(self._build_noise(e_index, entry, day))
            for p_index, entry in enumerate(s.payments):
                if entry.date == day:
                    body.extend(self._build_payments(p_index, entry, day))
            if s.donation is not None and s.donation.date == day:
                body.extend(self._build_donations(day))
            for spec in s.consolidations:
                if spec.date == day:
                    body.append(self._build_consolidation(spec, day))
            for spec in s.counterparties:
                if spec.date == day:
                    body.append(self._build_counterparty(spec, day))
            self._flush_block(day, body)

    def block_file(self) -> bytes:
        return b"".join(frame_block(serialize_block(b), self.s.network) for b in self.blocks)

    # -- ground truth -------------------------------------------------------

    def external_labels(self) -> list:
        rows = []
        if self.s.funding is not None:
            rows.append([self.mixer.address, "MIXER", "external-file"])
        if self.s.donation is not None:
            rows.append([self.donation_addr.address, "DONATION", "external-file"])
        for entity in sorted({c.entity for c in self.s.counterparties}):
            rows.append([self.cp_addr[entity].address, entity, "external-file"])
        return sorted(rows)

    def _simulate_labels(self) -> dict:
        labels = {address: entity for address, entity, _ in self.external_labels()}
        for m in self.meta:
            if m.message_id is None:
                continue
            sender, receiver = self.messages[m.message_id][1], self.messages[m.message_id][2]
            input_addresses = {a for a, _ in m.inputs if a is not None}
            for a in sorted(input_addresses):
                labels.setdefault(a, sender)
            for a, _, is_opret in m.outputs:
                if a is None or is_opret:
                    continue
                entity = sender if a in input_addresses else receiver
                existing = labels.setdefault(a, entity)
                if existing != entity:
                    raise InfeasibleScenario(
                        f"scenario produces a label conflict on {a}: "
                        f"{existing} vs {entity}")
        return labels

    def _classify_meta(self, m: _TxMeta, labels: dict) -> str:
        burned = sum(v for _, v, is_opret in m.outputs if is_opret)
        matched = m.message_id is not None
        if matched and burned > 0:
            return "burn"
        output_entities = [labels[a] for a, _, is_opret in m.outputs
                           if a is not None and not is_opret and a in labels]
        if matched and burned == 0 and "DONATION" in output_entities:
            return "donation"
        input_addresses = [a for a, _ in m.inputs if a is not None]
        input_entities = [labels[a] for a in input_addresses if a in labels]
        if (burned == 0 and input_addresses
                and len(input_entities) == len(input_addresses)
                and set(input_entities) <= {"GRU", "SVR", "FSB"}):
            return "payment"
        if all(a not in labels or labels[a] == "MIXER" for a in input_addresses) \
                and output_entities:
            return "funding"
        return "external"

    def _population(self, values: list) -> tuple:
        if not values:
            return 0.0, 0.0
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return mean, var ** 0.5

    def ground_truth(self) -> dict:
        s = self.s
        labels = self._simulate_labels()
        classes = {m.txid: self._classify_meta(m, labels) for m in self.meta}
        class_counts: dict = {}
        for c in classes.values():
            class_counts[c] = class_counts.get(c, 0) + 1

        daily: dict = {}
        daily_campaign: dict = {}
        for m in self.meta:
            burned = sum(v for _, v, is_opret in m.outputs if is_opret)
            has_opret = any(is_opret for _, _, is_opret in m.outputs)
            if not has_opret:
                continue
            key = m.day.isoformat()
            daily[key] = daily.get(key, 0) + burned
            if m.message_id is not None:
                daily_campaign[key] = daily_campaign.get(key, 0) + burned

        campaign: dict = {}
        all_inputs: set = set()
        all_participants: set = set()
        total_count = total_burned = 0
        first = last = None
        for m in self.meta:
            if m.message_id is None:
                continue
            burned = sum(v for _, v, is_opret in m.outputs if is_opret)
            row = campaign.setdefault(
                m.message_id,
                {"tx_count": 0, "total_burned_sat": 0, "first_time": None,
                 "last_time": None, "inputs": set(), "participants": set()})
            row["tx_count"] += 1
            row["total_burned_sat"] += burned
            row["first_time"] = m.time if row["first_time"] is None else min(row["first_time"], m.time)
            row["last_time"] = m.time if row["last_time"] is None else max(row["last_time"], m.time)
            inputs = {a for a, _ in m.inputs if a is not None}
            outs = {a for a, _, is_opret in m.outputs if a is not None and not is_opret}
            row["inputs"] |= inputs
            row["participants"] |= inputs | outs
            all_inputs |= inputs
            all_participants |= inputs | outs
            total_count += 1
            total_burned += burned
            first = m.time if first is None else min(first, m.time)
            last = m.time if last is None else max(last, m.time)
        campaign_doc = {}
        for message_id in sorted(set(campaign) | set(self.messages)):
            row = campaign.get(message_id)
            if row is None:
                campaign_doc[message_id] = {
                    "tx_count": 0, "total_burned_sat": 0, "first_time": None,
                    "last_time": None, "unique_addresses": 0, "unique_input_addresses": 0}
            else:
                campaign_doc[message_id] = {
                    "tx_count": row["tx_count"],
                    "total_burned_sat": row["total_burned_sat"],
                    "first_time": row["first_time"], "last_time": row["last_time"],
                    "unique_addresses": len(row["participants"]),
                    "unique_input_addresses": len(row["inputs"])}
        campaign_doc["TOTAL"] = {
            "tx_count": total_count, "total_burned_sat": total_burned,
            "first_time": first, "last_time": last,
            "unique_addresses": len(all_participants),
            "unique_input_addresses": len(all_inputs)}

        # clustering: non-callout co-spend groups over labeled + spender universe
        groups = []
        universe = set(labels)
        txs_by_address: dict = {}
        for m in self.meta:
            for a, _ in m.inputs:
                if a is not None:
                    txs_by_address.setdefault(a, set()).add(bytes(m.txid))
            for a, _, is_opret in m.outputs:
                if a is not None and not is_opret:
                    txs_by_address.setdefault(a, set()).add(bytes(m.txid))
            if m.category == "coinbase" or m.message_id is not None:
                continue
            addresses = sorted({a for a, _ in m.inputs if a is not None})
            if addresses:
                universe.update(addresses)
                groups.append(addresses)
        clusters = brute_force_clusters(groups, seed_addresses=sorted(universe))
        cluster_entities: dict = {}
        violations = 0
        for cluster_id, members in sorted(clusters.items()):
            present = sorted({labels[a] for a in members if a in labels})
            if len(present) > 1:
                violations += 1
            for entity in present:
                cluster_entities.setdefault(entity, []).append(cluster_id)
        label_counts: dict = {}
        for entity in labels.values():
            label_counts[entity] = label_counts.get(entity, 0) + 1
        cluster_stats = {}
        for entity in sorted(cluster_entities):
            ids = cluster_entities[entity]
            sizes = [len(clusters[c]) for c in ids]
            tx_counts = [len(set().union(*(txs_by_address.get(a, set())
                                           for a in clusters[c]))) for c in ids]
            mean_size, std_size = self._population(sizes)
            mean_tx, std_tx = self._population(tx_counts)
            cluster_stats[entity] = {
                "address_count": label_counts.get(entity, 0),
                "cluster_count": len(ids),
                "mean_size": f"{mean_size:.6f}", "std_size": f"{std_size:.6f}",
                "mean_tx_count": f"{mean_tx:.6f}", "std_tx_count": f"{std_tx:.6f}"}

        price_table = _GtPrices(s.prices)
        per_entity: dict = {}
        for m in self.meta:
            if classes[m.txid] != "payment":
                continue
            sums: dict = {}
            for a, v, is_opret in m.outputs:
                if a is None or is_opret or a not in labels:
                    continue
                sums[labels[a]] = sums.get(labels[a], 0) + v
            for entity in sorted(sums):
                usd = usd_value(sums[entity], m.day, price_table)
                per_entity.setdefault(entity, []).append((sums[entity], usd))
        payments_doc = {}
        for entity in sorted(per_entity):
            entries = per_entity[entity]
            values = [usd for _, usd in entries]
            outlier_indices, (_, median, _) = tukey_outliers(values)
            total = sum(values, Decimal("0.00"))
            mean = (total / len(values)).quantize(_CENT)
            out_values = [values[i] for i in outlier_indices]
            if out_values:
                out_mean = (sum(out_values, Decimal("0.00")) / len(out_values)).quantize(_CENT)
                out_min, out_max = min(out_values), max(out_values)
            else:
                out_mean = out_min = out_max = Decimal("0.00")
            payments_doc[entity] = {
                "tx_count": len(values),
                "total_sat": sum(sat for sat, _ in entries),
                "total_usd": f"{total:.2f}", "mean_usd": f"{mean:.2f}",
                "median_usd": f"{median:.2f}",
                "min_usd": f"{min(values):.2f}", "max_usd": f"{max(values):.2f}",
                "outlier_count": len(out_values),
                "outlier_mean_usd": f"{out_mean:.2f}",
                "outlier_min_usd": f"{out_min:.2f}", "outlier_max_usd": f"{out_max:.2f}"}

        donation_doc = None
        if s.donation is not None:
            d = s.donation
            tx_count = total_outputs = to_donation = dust_outputs = 0
            sat_to_donation = sat_total = 0
            usd_to_donation = usd_total = Decimal("0.00")
            spendable: list = []
            for m in self.meta:
                if classes[m.txid] != "donation":
                    continue
                tx_count += 1
                total_outputs += len(m.outputs)
                for a, v, is_opret in m.outputs:
                    if is_opret:
                        continue
                    usd = usd_value(v, m.day, price_table)
                    spendable.append(usd)
                    usd_total += usd
                    sat_total += v
                    if v < 1000:
                        dust_outputs += 1
                    if a is not None and labels.get(a) == "DONATION":
                        to_donation += 1
                        usd_to_donation += usd
                        sat_to_donation += v
            mean = (usd_total / len(spendable)).quantize(_CENT) if spendable else Decimal("0.00")
            minimum = min(spendable) if spendable else Decimal("0.00")
            donation_doc = {
                "tx_count": tx_count, "total_outputs": total_outputs,
                "outputs_to_donation": to_donation, "dust_outputs": dust_outputs,
                "sat_to_donation": sat_to_donation, "sat_total": sat_total,
                "usd_to_donation": f"{usd_to_donation:.2f}",
                "usd_total": f"{usd_total:.2f}",
                "output_mean_usd": f"{mean:.2f}", "output_min_usd": f"{minimum:.2f}"}

        report_address = self.pool[0].address if self.pool else None
        cp_events = []
        if report_address is not None:
            for m in self.meta:
                day_ok = True
                input_addresses = {a for a, _ in m.inputs if a is not None}
                if report_address in input_addresses:
                    sums: dict = {}
                    for a, v, is_opret in m.outputs:
                        if a is None or is_opret or a == report_address or a not in labels:
                            continue
                        sums[labels[a]] = sums.get(labels[a], 0) + v
                    for entity in sorted(sums):
                        usd = usd_value(sums[entity], m.day, price_table)
                        cp_events.append({"time": m.time, "txid": m.txid.display,
                                          "entity": entity, "direction": "out",
                                          "value_sat": sums[entity], "usd": f"{usd:.2f}"})
                received = sum(v for a, v, is_opret in m.outputs
                               if a == report_address and not is_opret)
                senders = sorted({labels[a] for a in input_addresses
                                  if a != report_address and a in labels})
                if received and senders:
                    for entity in senders:
                        usd = usd_value(received, m.day, price_table)
                        cp_events.append({"time": m.time, "txid": m.txid.display,
                                          "entity": entity, "direction": "in",
                                          "value_sat": received, "usd": f"{usd:.2f}"})
            cp_events.sort(key=lambda e: (e["time"], e["txid"], e["direction"], e["entity"]))

        peel_doc = None
        if s.funding is not None:
            peel_doc = {
                "start": {"txid": self.funding_outpoint[0].display, "vout": 0},
                "hops": self.peel_hops,
                "termination_labeled": ("reached_labeled" if s.funding.peel_hops
                                        else "no_successor"),
                "termination_unlabeled": "no_successor",
            }

        return {
            "schema_version": 1,
            "seed": s.seed,
            "network": s.network,
            "registry": s.registry_doc,
            "blocks": len(self.blocks),
            "transactions": len(self.meta),
            "external_labels": self.external_labels(),
            "prices": [list(row) for row in sorted(s.prices)],
            "labels": dict(sorted(labels.items())),
            "label_counts": dict(sorted(label_counts.items())),
            "conflicts": 0,
            "burn_daily": dict(sorted(daily.items())),
            "burn_daily_campaign": dict(sorted(daily_campaign.items())),
            "campaign": campaign_doc,
            "cluster_stats": cluster_stats,
            "cluster_violations": violations,
            "payments": payments_doc,
            "donation": donation_doc,
            "report_address": report_address,
            "counterparty_events": cp_events,
            "peel": peel_doc,
            "classification_counts": dict(sorted(class_counts.items())),
        }


class _GtPrices:
    """Minimal price lookup compatible with analytics.usd_value."""

    def __init__(self, rows):
        self._prices = {date.fromisoformat(d): Decimal(p) for d, p in rows}

    def price(self, day: date) -> Decimal:
        try:
            return self._prices[day]
        except KeyError:
            raise InfeasibleScenario(f"no price for {day.isoformat()}") from None

    def __contains__(self, day: date) -> bool:
        return day in self._prices


def build_scenario(scenario: ChainScenario) -> tuple:
    """Returns (block file bytes, ground truth document)."""
    builder = _Builder(scenario)
    builder.build()
    return builder.block_file(), builder.ground_truth()


def baseline_scenario_path() -> str:
    from importlib import resources
    return str(resources.files("burntrace").joinpath("data/baseline_scenario.json"))
