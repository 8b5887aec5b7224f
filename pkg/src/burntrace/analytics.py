"""Burn accounting, payment statistics, peel tracing, USD conversion, exports.

All USD arithmetic is decimal: per-transaction values are rounded half-up to
cents before any aggregation, so report totals are sums of printed numbers.
"""

import csv
import json
from dataclasses import dataclass
from datetime import date, datetime, timezone
from decimal import Decimal, ROUND_HALF_UP
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .attrib import MessageRegistry, find_callouts, match_callout
from .errors import BadConfig, DateNotCovered
from .ledger import LedgerIndex, ResolvedTransaction, address_history, resolve_all, resolve_transaction
from .script import ScriptKind, decode_payload_text
from .wire import Amount, OutPoint, TxId

_CENT = Decimal("0.01")
_SAT_PER_BTC = Decimal(100_000_000)

PAYER_ENTITIES = frozenset({"GRU", "SVR", "FSB"})
DEFAULT_DUST_THRESHOLD = 1_000  # satoshis; covers 547-sat dust and the 546-sat relay floor


def tx_date(rtx: ResolvedTransaction) -> date:
    return datetime.fromtimestamp(rtx.time, tz=timezone.utc).date()


def _iso_utc(timestamp: int) -> str:
    return datetime.fromtimestamp(timestamp, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class PriceTable:
    """Calendar-date USD/BTC prices from an offline CSV; no live feeds."""

    def __init__(self, prices: dict):
        for day, price in prices.items():
            if price <= 0:
                raise BadConfig(f"non-positive price {price} on {day}")
        self._prices = dict(prices)

    def __contains__(self, day: date) -> bool:
        return day in self._prices

    def __len__(self) -> int:
        return len(self._prices)

    def price(self, day: date) -> Decimal:
        try:
            return self._prices[day]
        except KeyError:
            raise DateNotCovered(f"no USD/BTC price for {day.isoformat()}") from None

    @classmethod
    def from_rows(cls, rows: Iterable) -> "PriceTable":
        prices = {}
        for day_text, price_text in rows:
            try:
                day = date.fromisoformat(day_text)
                price = Decimal(price_text)
            except (ValueError, ArithmeticError) as exc:
                raise BadConfig(f"bad price row {day_text!r},{price_text!r}") from exc
            prices[day] = price
        return cls(prices)

    @classmethod
    def from_csv(cls, path: str) -> "PriceTable":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        if not rows or rows[0] != ["date", "usd_per_btc"]:
            raise BadConfig(f"{path}: expected header date,usd_per_btc")
        return cls.from_rows(rows[1:])

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("#schema_version=1\n")
            writer = csv.writer(fh)
            writer.writerow(["date", "usd_per_btc"])
            for day in sorted(self._prices):
                writer.writerow([day.isoformat(), str(self._prices[day])])


def usd_value(amount, day: date, table: PriceTable) -> Decimal:
    """satoshis x price / 1e8, rounded half-up to cents."""
    raw = Decimal(int(amount)) * table.price(day) / _SAT_PER_BTC
    return raw.quantize(_CENT, rounding=ROUND_HALF_UP)


# -- burn accounting -----------------------------------------------------


@dataclass(frozen=True)
class BurnRecord:
    txid: TxId
    time: int
    value: Amount
    payload: Optional[bytes]
    message_id: Optional[str]


@dataclass(frozen=True)
class BurnSeries:
    daily: dict   # date -> Amount
    records: tuple

    def total(self) -> Amount:
        return Amount(sum(int(v) for v in self.daily.values()))


def burn_series(
    index: LedgerIndex,
    date_range: Optional[tuple] = None,
    campaign_only: bool = False,
    registry: Optional[MessageRegistry] = None,
) -> BurnSeries:
    """Daily totals of value attached to OP_RETURN outputs.

    With campaign_only, only registry-matched transactions count; the
    difference against the unrestricted series is exactly the unrelated
    OP_RETURN traffic sharing those dates.
    """
    if campaign_only and registry is None:
        raise BadConfig("campaign_only requires a message registry")
    daily: dict = {}
    records = []
    for rtx in resolve_all(index):
        payloads = rtx.op_return_payloads
        if not payloads:
            continue
        day = tx_date(rtx)
        if date_range is not None:
            start, end = date_range
            if (start is not None and day < start) or (end is not None and day > end):
                continue
        message_id = None
        if registry is not None:
            for payload in payloads:
                callout = match_callout(decode_payload_text(payload), registry)
                if callout is not None:
                    message_id = callout.message_id
                    break
        if campaign_only and message_id is None:
            continue
        value = Amount(rtx.op_return_value)
        daily[day] = Amount(daily.get(day, 0) + value)
        records.append(BurnRecord(rtx.txid, rtx.time, value, payloads[0], message_id))
    return BurnSeries(dict(sorted(daily.items())), tuple(records))


@dataclass(frozen=True)
class CampaignRow:
    message_id: str
    tx_count: int
    first_time: Optional[int]
    last_time: Optional[int]
    total_burned: Amount
    unique_addresses: int        # inputs union outputs
    unique_input_addresses: int


@dataclass(frozen=True)
class CampaignSummary:
    rows: tuple   # one CampaignRow per registry message, message_id order
    total: CampaignRow


def campaign_summary(index: LedgerIndex, registry: MessageRegistry, labels=None) -> CampaignSummary:
    callouts = find_callouts(index, registry)
    per_message: dict = {}
    all_addresses: set = set()
    all_inputs: set = set()
    total_count = 0
    total_burned = 0
    first_time = last_time = None
    for rtx in resolve_all(index):
        callout = callouts.get(bytes(rtx.txid))
        if callout is None:
            continue
        bucket = per_message.setdefault(
            callout.message_id, {"count": 0, "burned": 0, "first": None, "last": None,
                                 "addresses": set(), "inputs": set()})
        bucket["count"] += 1
        bucket["burned"] += rtx.op_return_value
        bucket["first"] = rtx.time if bucket["first"] is None else min(bucket["first"], rtx.time)
        bucket["last"] = rtx.time if bucket["last"] is None else max(bucket["last"], rtx.time)
        inputs = set(rtx.input_addresses)
        outputs = {a for a, _, _, _ in rtx.outputs if a is not None}
        bucket["inputs"] |= inputs
        bucket["addresses"] |= inputs | outputs
        all_inputs |= inputs
        all_addresses |= inputs | outputs
        total_count += 1
        total_burned += rtx.op_return_value
        first_time = rtx.time if first_time is None else min(first_time, rtx.time)
        last_time = rtx.time if last_time is None else max(last_time, rtx.time)
    known_ids = sorted({m.message_id for m in registry.messages} | set(per_message))
    rows = []
    for message_id in known_ids:
        bucket = per_message.get(message_id)
        if bucket is None:
            rows.append(CampaignRow(message_id, 0, None, None, Amount(0), 0, 0))
        else:
            rows.append(CampaignRow(
                message_id, bucket["count"], bucket["first"], bucket["last"],
                Amount(bucket["burned"]), len(bucket["addresses"]), len(bucket["inputs"])))
    total = CampaignRow("TOTAL", total_count, first_time, last_time,
                        Amount(total_burned), len(all_addresses), len(all_inputs))
    return CampaignSummary(tuple(rows), total)


# -- transaction classification ------------------------------------------


def classify_transaction(
    rtx: ResolvedTransaction,
    labels: dict,
    registry: MessageRegistry,
    dust_threshold: int = DEFAULT_DUST_THRESHOLD,
) -> str:
    """Assign exactly one of burn, donation, payment, funding, external.

    dust_threshold does not influence the class; it is threaded through to
    reports that count dust outputs.
    """
    matched = False
    for payload in rtx.op_return_payloads:
        if match_callout(decode_payload_text(payload), registry) is not None:
            matched = True
            break
    burned = rtx.op_return_value
    if matched and burned > 0:
        return "burn"
    output_entities = [labels[a].entity for a, _, _, _ in rtx.outputs
                       if a is not None and a in labels]
    if matched and burned == 0 and "DONATION" in output_entities:
        return "donation"
    input_addresses = rtx.input_addresses
    input_entities = [labels[a].entity for a in input_addresses if a in labels]
    if (burned == 0 and input_addresses
            and len(input_entities) == len(input_addresses)
            and set(input_entities) <= PAYER_ENTITIES):
        return "payment"
    inputs_foreign = all(
        a not in labels or labels[a].entity == "MIXER" for a in input_addresses)
    if inputs_foreign and output_entities:
        return "funding"
    return "external"


def classify_all(
    index: LedgerIndex,
    labels: dict,
    registry: MessageRegistry,
    dust_threshold: int = DEFAULT_DUST_THRESHOLD,
) -> dict:
    """Classify every indexed transaction; returns class -> list in chain order."""
    buckets: dict = {"burn": [], "donation": [], "payment": [], "funding": [], "external": []}
    for rtx in resolve_all(index):
        buckets[classify_transaction(rtx, labels, registry, dust_threshold)].append(rtx)
    return buckets


# -- payment statistics ---------------------------------------------------


@dataclass(frozen=True)
class TimelineEntry:
    time: int
    txid: TxId
    usd: Decimal
    is_outlier: bool


@dataclass(frozen=True)
class PaymentStatsRow:
    entity: str
    tx_count: int
    total_sat: int
    total_usd: Decimal
    mean_usd: Decimal
    median_usd: Decimal
    min_usd: Decimal
    max_usd: Decimal
    outlier_count: int
    outlier_mean_usd: Decimal
    outlier_min_usd: Decimal
    outlier_max_usd: Decimal


@dataclass(frozen=True)
class PaymentStats:
    rows: dict    # entity -> PaymentStatsRow
    series: dict  # entity -> tuple of TimelineEntry, chain order


def _quartiles(sorted_values: Sequence[Fraction]) -> tuple:
    """Q1, median, Q3 by linear interpolation over (n-1) positions."""
    n = len(sorted_values)

    def at(p: Fraction) -> Fraction:
        h = p * (n - 1)
        lo = h.numerator // h.denominator
        frac = h - lo
        if frac and lo + 1 < n:
            return sorted_values[lo] + (sorted_values[lo + 1] - sorted_values[lo]) * frac
        return sorted_values[lo]

    return at(Fraction(1, 4)), at(Fraction(1, 2)), at(Fraction(3, 4))


def _to_cents(value: Decimal) -> Fraction:
    return Fraction(int(value.scaleb(2)))


def _from_cents(value: Fraction) -> Decimal:
    return (Decimal(value.numerator) / Decimal(value.denominator)).scaleb(-2).quantize(
        _CENT, rounding=ROUND_HALF_UP)


def tukey_outliers(values: Sequence[Decimal]) -> tuple:
    """Indices of values above Q3 + 1.5 IQR; also returns (q1, median, q3)."""
    cents = [_to_cents(v) for v in values]
    order = sorted(cents)
    q1, median, q3 = _quartiles(order)
    fence = q3 + Fraction(3, 2) * (q3 - q1)
    outliers = tuple(i for i, v in enumerate(cents) if v > fence)
    return outliers, (_from_cents(q1), _from_cents(median), _from_cents(q3))


def payment_stats(payments: Iterable, labels: dict, price_table: PriceTable) -> PaymentStats:
    """Per-entity USD statistics over payment transactions.

    A payment's value for an entity is the sum of its outputs to addresses
    labeled with that entity, converted at the transaction date's price.
    One transaction can therefore appear under several entities.
    """
    per_entity: dict = {}
    for rtx in payments:
        sums: dict = {}
        for address, value, kind, _ in rtx.outputs:
            if address is None or address not in labels:
                continue
            entity = labels[address].entity
            sums[entity] = sums.get(entity, 0) + int(value)
        day = tx_date(rtx)
        for entity in sorted(sums):
            usd = usd_value(sums[entity], day, price_table)
            per_entity.setdefault(entity, []).append((rtx.time, rtx.txid, sums[entity], usd))
    rows = {}
    series = {}
    zero = Decimal("0.00")
    for entity in sorted(per_entity):
        entries = per_entity[entity]
        values = [usd for _, _, _, usd in entries]
        outlier_indices, (q1, median, q3) = tukey_outliers(values)
        outlier_set = set(outlier_indices)
        total = sum(values, zero)
        total_sat = sum(sat for _, _, sat, _ in entries)
        mean = (total / len(values)).quantize(_CENT, rounding=ROUND_HALF_UP)
        out_values = [values[i] for i in outlier_indices]
        if out_values:
            out_total = sum(out_values, zero)
            out_mean = (out_total / len(out_values)).quantize(_CENT, rounding=ROUND_HALF_UP)
            out_min, out_max = min(out_values), max(out_values)
        else:
            out_mean = out_min = out_max = zero
        rows[entity] = PaymentStatsRow(
            entity, len(values), total_sat, total, mean, median, min(values), max(values),
            len(out_values), out_mean, out_min, out_max)
        series[entity] = tuple(
            TimelineEntry(t, tid, usd, i in outlier_set)
            for i, (t, tid, _, usd) in enumerate(entries))
    return PaymentStats(rows, series)


# -- peel-chain tracing ---------------------------------------------------


@dataclass(frozen=True)
class PeelHop:
    txid: TxId
    vout: int
    value: Amount
    address: str


@dataclass(frozen=True)
class PeelTrace:
    start: OutPoint
    hops: tuple
    termination: str  # max_hops | no_successor | reached_labeled


def trace_peel_chain(
    index: LedgerIndex,
    start: OutPoint,
    max_hops: int = 20,
    heuristic: str = "largest",
    labels: Optional[dict] = None,
) -> PeelTrace:
    """Follow spends forward, one continuation output per hop.

    heuristic "largest" keeps to the biggest output; "unlabeled" prefers the
    biggest output whose address has no label, falling back to the biggest
    overall. Ties break to the lowest output index.
    """
    if heuristic not in ("largest", "unlabeled"):
        raise BadConfig(f"unknown heuristic {heuristic!r}")
    hops = []
    current = start
    while True:
        spender = index.spender_of(current)
        if spender is None:
            return PeelTrace(start, tuple(hops), "no_successor")
        rtx = resolve_transaction(index, spender)
        candidates = [(vout, a, int(v)) for vout, (a, v, k, _) in enumerate(rtx.outputs)
                      if a is not None]
        if not candidates:
            return PeelTrace(start, tuple(hops), "no_successor")
        pool = candidates
        if heuristic == "unlabeled" and labels:
            unlabeled = [c for c in candidates if c[1] not in labels]
            if unlabeled:
                pool = unlabeled
        vout, address, value = max(pool, key=lambda c: (c[2], -c[0]))
        hops.append(PeelHop(rtx.txid, vout, Amount(value), address))
        if labels and address in labels:
            return PeelTrace(start, tuple(hops), "reached_labeled")
        if len(hops) >= max_hops:
            return PeelTrace(start, tuple(hops), "max_hops")
        current = OutPoint(rtx.txid, vout)


# -- counterparty and donation reports ------------------------------------


@dataclass(frozen=True)
class CounterpartyEvent:
    time: int
    txid: TxId
    entity: str
    direction: str  # "in" | "out"
    value: Amount
    usd: Optional[Decimal]


def counterparty_report(
    index: LedgerIndex,
    labels: dict,
    address: str,
    price_table: Optional[PriceTable] = None,
) -> list:
    """Chronological transfers between one address and labeled counterparties."""
    events = []
    seen = set()
    for tid, role, _time in address_history(index, address):
        key = (bytes(tid), role)
        if key in seen:
            continue
        seen.add(key)
        rtx = resolve_transaction(index, tid)
        day = tx_date(rtx)

        def to_usd(value: int) -> Optional[Decimal]:
            if price_table is None or day not in price_table:
                return None
            return usd_value(value, day, price_table)

        if role == "input":
            sums: dict = {}
            for out_address, value, _, _ in rtx.outputs:
                if out_address is None or out_address == address or out_address not in labels:
                    continue
                entity = labels[out_address].entity
                sums[entity] = sums.get(entity, 0) + int(value)
            for entity in sorted(sums):
                events.append(CounterpartyEvent(
                    rtx.time, rtx.txid, entity, "out", Amount(sums[entity]),
                    to_usd(sums[entity])))
        else:
            senders = sorted({labels[a].entity for a in rtx.input_addresses
                              if a != address and a in labels})
            if not senders:
                continue
            received = sum(int(v) for a, v, _, _ in rtx.outputs if a == address)
            for entity in senders:
                events.append(CounterpartyEvent(
                    rtx.time, rtx.txid, entity, "in", Amount(received), to_usd(received)))
    events.sort(key=lambda e: (e.time, e.txid.display, e.direction, e.entity))
    return events


@dataclass(frozen=True)
class DonationReport:
    tx_count: int
    total_outputs: int            # every output, OP_RETURN included
    outputs_to_donation: int
    dust_outputs: int
    sat_to_donation: int
    sat_total: int
    usd_to_donation: Decimal
    usd_total: Decimal            # over spendable (non-OP_RETURN) outputs
    output_mean_usd: Decimal
    output_min_usd: Decimal


def donation_report(
    index: LedgerIndex,
    registry: MessageRegistry,
    labels: dict,
    price_table: PriceTable,
    dust_threshold: int = DEFAULT_DUST_THRESHOLD,
) -> DonationReport:
    zero = Decimal("0.00")
    tx_count = total_outputs = to_donation = dust_outputs = 0
    sat_to_donation = sat_total = 0
    usd_to_donation = usd_total = zero
    spendable_usd: list = []
    for rtx in resolve_all(index):
        if classify_transaction(rtx, labels, registry, dust_threshold) != "donation":
            continue
        tx_count += 1
        day = tx_date(rtx)
        total_outputs += len(rtx.outputs)
        for address, value, kind, _ in rtx.outputs:
            if kind == ScriptKind.OP_RETURN:
                continue
            usd = usd_value(value, day, price_table)
            spendable_usd.append(usd)
            usd_total += usd
            sat_total += int(value)
            if int(value) < dust_threshold:
                dust_outputs += 1
            if address is not None and address in labels and labels[address].entity == "DONATION":
                to_donation += 1
                usd_to_donation += usd
                sat_to_donation += int(value)
    if spendable_usd:
        mean = (usd_total / len(spendable_usd)).quantize(_CENT, rounding=ROUND_HALF_UP)
        minimum = min(spendable_usd)
    else:
        mean = minimum = zero
    return DonationReport(tx_count, total_outputs, to_donation, dust_outputs,
                          sat_to_donation, sat_total,
                          usd_to_donation, usd_total, mean, minimum)


# -- graph and timeline exports -------------------------------------------


def export_graph(payments: Iterable, labels: dict,
                 dot_path: Optional[str] = None,
                 json_path: Optional[str] = None) -> dict:
    """Payment transfers as a node/edge document, written as DOT and JSON.

    The edge source is the transaction's smallest input address (inputs are
    one wallet under the co-spend assumption); change outputs back to an
    input address are not transfers and are skipped. Layout is left to
    external tools.
    """
    nodes: dict = {}
    edges = []
    for rtx in payments:
        input_addresses = sorted(set(rtx.input_addresses))
        if not input_addresses:
            continue
        sender = input_addresses[0]
        inputs = set(input_addresses)
        for address, value, _, _ in rtx.outputs:
            if address is None or address in inputs:
                continue
            for endpoint in (sender, address):
                nodes.setdefault(endpoint, labels[endpoint].entity if endpoint in labels else "")
            edges.append({
                "from": sender, "to": address, "value_sat": int(value),
                "time": rtx.time, "txid": rtx.txid.display,
            })
    edges.sort(key=lambda e: (e["time"], e["txid"], e["from"], e["to"], e["value_sat"]))
    doc = {
        "schema_version": 1,
        "nodes": [{"address": a, "entity": nodes[a]} for a in sorted(nodes)],
        "edges": edges,
    }
    if dot_path is not None:
        lines = ["digraph payments {"]
        for node in doc["nodes"]:
            lines.append(f'  "{node["address"]}" [entity="{node["entity"]}"];')
        for edge in edges:
            lines.append(
                f'  "{edge["from"]}" -> "{edge["to"]}" '
                f'[value_sat={edge["value_sat"]}, time={edge["time"]}];')
        lines.append("}")
        with open(dot_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return doc


def burn_timeline(series: BurnSeries, price_table: PriceTable) -> tuple:
    entries = []
    for record in series.records:
        day = datetime.fromtimestamp(record.time, tz=timezone.utc).date()
        entries.append(TimelineEntry(
            record.time, record.txid, usd_value(record.value, day, price_table), False))
    return tuple(entries)


def export_timeline(entries: Iterable, csv_path: str, svg_path: Optional[str] = None) -> int:
    rows = sorted(entries, key=lambda e: (e.time, e.txid.display))
    with open(csv_path, "w", newline="") as fh:
        fh.write("#schema_version=1\n")
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "txid", "usd_value", "is_outlier"])
        for entry in rows:
            writer.writerow([_iso_utc(entry.time), entry.txid.display,
                             f"{entry.usd:.2f}", "true" if entry.is_outlier else "false"])
    if svg_path is not None:
        _write_timeline_svg(rows, svg_path)
    return len(rows)


def _write_timeline_svg(rows: Sequence[TimelineEntry], path: str) -> None:
    width, height, margin = 800, 300, 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    if rows:
        t_lo = min(r.time for r in rows)
        t_hi = max(r.time for r in rows)
        v_hi = max(float(r.usd) for r in rows)
        t_span = (t_hi - t_lo) or 1
        v_span = v_hi or 1.0
        inner_w = width - 2 * margin
        inner_h = height - 2 * margin
        for r in rows:
            x = margin + inner_w * (r.time - t_lo) / t_span
            y = height - margin - inner_h * float(r.usd) / v_span
            color = "#d62728" if r.is_outlier else "#1f77b4"
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{margin}" y="{margin - 8}" font-size="12">'
            f'USD 0.00 to {v_hi:.2f}; {_iso_utc(t_lo)} to {_iso_utc(t_hi)}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


# -- report documents -----------------------------------------------------


def _usd_str(value: Optional[Decimal]) -> Optional[str]:
    return None if value is None else f"{value:.2f}"


def campaign_doc(summary: CampaignSummary) -> dict:
    def row_doc(row: CampaignRow) -> dict:
        return {
            "message_id": row.message_id,
            "tx_count": row.tx_count,
            "first_time": row.first_time,
            "last_time": row.last_time,
            "total_burned_sat": int(row.total_burned),
            "unique_addresses": row.unique_addresses,
            "unique_input_addresses": row.unique_input_addresses,
        }
    return {"schema_version": 1,
            "messages": [row_doc(r) for r in summary.rows],
            "total": row_doc(summary.total)}


def burn_series_doc(series: BurnSeries) -> dict:
    return {
        "schema_version": 1,
        "daily": {d.isoformat(): int(v) for d, v in series.daily.items()},
        "records": [
            {"txid": r.txid.display, "time": r.time, "value_sat": int(r.value),
             "payload_hex": r.payload.hex() if r.payload is not None else None,
             "message_id": r.message_id}
            for r in series.records
        ],
    }


def payment_stats_doc(stats: PaymentStats) -> dict:
    rows = []
    for entity in sorted(stats.rows):
        row = stats.rows[entity]
        rows.append({
            "entity": row.entity,
            "tx_count": row.tx_count,
            "total_sat": row.total_sat,
            "total_usd": _usd_str(row.total_usd),
            "mean_usd": _usd_str(row.mean_usd),
            "median_usd": _usd_str(row.median_usd),
            "min_usd": _usd_str(row.min_usd),
            "max_usd": _usd_str(row.max_usd),
            "outlier_count": row.outlier_count,
            "outlier_mean_usd": _usd_str(row.outlier_mean_usd),
            "outlier_min_usd": _usd_str(row.outlier_min_usd),
            "outlier_max_usd": _usd_str(row.outlier_max_usd),
        })
    return {"schema_version": 1, "entities": rows}


def peel_trace_doc(trace: PeelTrace) -> dict:
    return {
        "schema_version": 1,
        "start": {"txid": trace.start.txid.display, "vout": trace.start.vout},
        "hops": [
            {"txid": h.txid.display, "vout": h.vout, "value_sat": int(h.value),
             "address": h.address}
            for h in trace.hops
        ],
        "termination": trace.termination,
    }


def counterparty_doc(events: Iterable) -> dict:
    return {
        "schema_version": 1,
        "events": [
            {"time": e.time, "txid": e.txid.display, "entity": e.entity,
             "direction": e.direction, "value_sat": int(e.value), "usd": _usd_str(e.usd)}
            for e in events
        ],
    }


def donation_doc(report: DonationReport) -> dict:
    return {
        "schema_version": 1,
        "tx_count": report.tx_count,
        "total_outputs": report.total_outputs,
        "outputs_to_donation": report.outputs_to_donation,
        "dust_outputs": report.dust_outputs,
        "sat_to_donation": report.sat_to_donation,
        "sat_total": report.sat_total,
        "usd_to_donation": _usd_str(report.usd_to_donation),
        "usd_total": _usd_str(report.usd_total),
        "output_mean_usd": _usd_str(report.output_mean_usd),
        "output_min_usd": _usd_str(report.output_min_usd),
    }
