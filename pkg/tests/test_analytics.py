import hashlib
import json
import statistics
from datetime import date, datetime, timezone
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from burntrace.analytics import (BurnSeries, CounterpartyEvent, PaymentStats,
                                 PriceTable, TimelineEntry, burn_series,
                                 burn_series_doc, burn_timeline, campaign_doc,
                                 campaign_summary, classify_all,
                                 classify_transaction, counterparty_doc,
                                 counterparty_report, donation_doc,
                                 donation_report, export_graph, export_timeline,
                                 payment_stats, payment_stats_doc,
                                 peel_trace_doc, trace_peel_chain, tukey_outliers,
                                 usd_value)
from burntrace.attrib import EntityLabel
from burntrace.errors import BadConfig, DateNotCovered
from burntrace.ledger import ResolvedTransaction, build_index
from burntrace.script import ScriptKind, op_return_script, script_for_address_kind
from burntrace.wire import (Amount, Block, BlockHeader, COINBASE_TXID, COINBASE_VOUT,
                            OutPoint, Transaction, TxId, TxInput, TxOutput,
                            merkle_root, txid)


def _noon(iso: str) -> int:
    day = date.fromisoformat(iso)
    return int(datetime(day.year, day.month, day.day, 12, tzinfo=timezone.utc).timestamp())


def _table(**prices) -> PriceTable:
    rows = [(iso.replace("_", "-"), text) for iso, text in prices.items()]
    return PriceTable.from_rows(rows)


class TestPriceTable:
    def test_lookup(self):
        table = _table(**{"2022-02-24": "37372.00"})
        assert table.price(date(2022, 2, 24)) == Decimal("37372.00")
        assert date(2022, 2, 24) in table
        assert len(table) == 1

    def test_missing_date(self):
        table = _table(**{"2022-02-24": "37372.00"})
        with pytest.raises(DateNotCovered):
            table.price(date(2022, 2, 25))

    def test_non_positive_price_rejected(self):
        with pytest.raises(BadConfig):
            PriceTable({date(2022, 1, 1): Decimal("0")})
        with pytest.raises(BadConfig):
            PriceTable({date(2022, 1, 1): Decimal("-5")})

    def test_bad_row(self):
        with pytest.raises(BadConfig):
            PriceTable.from_rows([("not-a-date", "100")])
        with pytest.raises(BadConfig):
            PriceTable.from_rows([("2022-01-01", "x")])

    def test_csv_round_trip(self, tmp_path):
        table = _table(**{"2022-02-24": "37372.00", "2024-05-28": "69366.44"})
        path = tmp_path / "prices.csv"
        table.to_csv(str(path))
        text = path.read_text()
        assert text.startswith("#schema_version=1\ndate,usd_per_btc\n")
        loaded = PriceTable.from_csv(str(path))
        assert loaded.price(date(2024, 5, 28)) == Decimal("69366.44")

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("day,usd\n2022-01-01,100\n")
        with pytest.raises(BadConfig):
            PriceTable.from_csv(str(path))


class TestUsdValue:
    def test_ransomware_payment(self):
        table = _table(**{"2022-02-24": "37372.00"})
        assert usd_value(1_248_500, date(2022, 2, 24), table) == Decimal("466.59")

    def test_exchange_deposit(self):
        table = _table(**{"2024-05-28": "69366.44"})
        assert usd_value(330_200, date(2024, 5, 28), table) == Decimal("229.05")

    def test_half_up_rounding(self):
        # 1 sat at 4.5M USD/BTC is exactly 0.045 USD; half-up gives 0.05
        table = _table(**{"2022-01-01": "4500000"})
        assert usd_value(1, date(2022, 1, 1), table) == Decimal("0.05")

    def test_whole_btc(self):
        table = _table(**{"2022-02-18": "42048.00"})
        assert usd_value(100_000_000, date(2022, 2, 18), table) == Decimal("42048.00")


# -- shared chain builders ------------------------------------------------

def _p2pkh(tag: str) -> bytes:
    payload = hashlib.sha256(tag.encode()).digest()[:20]
    return script_for_address_kind(ScriptKind.P2PKH, payload)


def _coinbase(height: int, value: int, script: bytes) -> Transaction:
    inp = TxInput(OutPoint(TxId(COINBASE_TXID), COINBASE_VOUT), bytes([1, height]), 0xFFFFFFFF)
    return Transaction(1, (inp,), (TxOutput(Amount(value), script),), 0)


def _block(txs, time) -> Block:
    header = BlockHeader(0x20000000, b"\x00" * 32, merkle_root(txs), time, 0x207FFFFF, 0)
    return Block(header, tuple(txs))


def _addr_of(index, tx, vout=0):
    return index.output_info(OutPoint(txid(tx), vout)).address


def _spend(prev, vout, outputs):
    return Transaction(2, (TxInput(OutPoint(txid(prev), vout), b"", 0xFFFFFFFF),),
                       tuple(TxOutput(Amount(v), s) for v, s in outputs), 0)


def _rtx(outputs, inputs=((None, None),), time=0, tag=b"fab", is_coinbase=False):
    """Fabricated resolved transaction for pure-function tests."""
    tid = TxId(hashlib.sha256(tag).digest())
    return ResolvedTransaction(tid, tuple(inputs), tuple(outputs), Amount(0),
                               time, 0, 0, is_coinbase)


class TestBurnSeries:
    def _index(self):
        cb0 = _coinbase(0, 10_000_000, _p2pkh("f0"))
        cb1 = _coinbase(1, 10_000_000, _p2pkh("f1"))
        cb2 = _coinbase(2, 10_000_000, _p2pkh("f2"))
        burn1 = _spend(cb0, 0, [(5000, op_return_script(b"GRU to SVR")),
                                (9_990_000, _p2pkh("c1"))])
        noise = _spend(cb1, 0, [(700, op_return_script(b"telemetry blob")),
                                (9_990_000, _p2pkh("c2"))])
        burn2 = _spend(cb2, 0, [(2500, op_return_script(b"GRU to FSB")),
                                (9_990_000, _p2pkh("c3"))])
        blocks = [
            _block([cb0], _noon("2022-02-10")),
            _block([cb1], _noon("2022-02-10")),
            _block([cb2], _noon("2022-02-10")),
            _block([_coinbase(3, 10_000_000, _p2pkh("m3")), burn1, noise],
                   _noon("2022-02-12")),
            _block([_coinbase(4, 10_000_000, _p2pkh("m4")), burn2],
                   _noon("2022-02-13")),
        ]
        return build_index(blocks)

    def test_daily_totals(self, registry):
        series = burn_series(self._index())
        assert {d.isoformat(): int(v) for d, v in series.daily.items()} == {
            "2022-02-12": 5700, "2022-02-13": 2500,
        }
        assert int(series.total()) == 8200

    def test_campaign_only_drops_noise(self, registry):
        series = burn_series(self._index(), campaign_only=True, registry=registry)
        assert {d.isoformat(): int(v) for d, v in series.daily.items()} == {
            "2022-02-12": 5000, "2022-02-13": 2500,
        }

    def test_campaign_only_requires_registry(self):
        with pytest.raises(BadConfig):
            burn_series(self._index(), campaign_only=True)

    def test_date_range(self, registry):
        index = self._index()
        only_first = burn_series(index, date_range=(None, date(2022, 2, 12)))
        assert [d.isoformat() for d in only_first.daily] == ["2022-02-12"]
        only_second = burn_series(index, date_range=(date(2022, 2, 13), None))
        assert [d.isoformat() for d in only_second.daily] == ["2022-02-13"]
        both = burn_series(index, date_range=(date(2022, 2, 12), date(2022, 2, 13)))
        assert len(both.daily) == 2

    def test_records_annotated(self, registry):
        series = burn_series(self._index(), registry=registry)
        by_payload = {r.payload: r for r in series.records}
        assert by_payload[b"GRU to SVR"].message_id == "m1"
        assert by_payload[b"telemetry blob"].message_id is None
        assert int(by_payload[b"GRU to FSB"].value) == 2500

    def test_baseline_daily_matches_ground_truth(self, baseline_index, baseline, registry):
        _, _, gt = baseline
        series = burn_series(baseline_index)
        full = {d.isoformat(): int(v) for d, v in series.daily.items()}
        assert full == gt["burn_daily"]
        # the two headline days, in whole satoshis
        assert full["2022-02-12"] == 369_113_600
        assert full["2022-02-18"] == 416_773_700
        campaign = burn_series(baseline_index, campaign_only=True, registry=registry)
        got = {d.isoformat(): int(v) for d, v in campaign.daily.items()}
        assert got == gt["burn_daily_campaign"]


class TestCampaignSummary:
    def _index(self):
        cb0 = _coinbase(0, 10_000_000, _p2pkh("a"))
        cb1 = _coinbase(1, 10_000_000, _p2pkh("b"))
        cb2 = _coinbase(2, 10_000_000, _p2pkh("c"))
        burn1 = _spend(cb0, 0, [(300, op_return_script(b"GRU to SVR")),
                                (9_990_000, _p2pkh("e1"))])
        burn2 = _spend(cb1, 0, [(200, op_return_script(b"GRU to SVR")),
                                (9_990_000, _p2pkh("e2"))])
        burn3 = _spend(cb2, 0, [(100, op_return_script(b"GRU to FSB")),
                                (9_990_000, _p2pkh("b"))])
        blocks = [
            _block([cb0], _noon("2022-02-10")),
            _block([cb1], _noon("2022-02-10")),
            _block([cb2], _noon("2022-02-10")),
            _block([_coinbase(3, 10_000_000, _p2pkh("m")), burn1, burn2, burn3],
                   _noon("2022-02-12")),
        ]
        return build_index(blocks), cb0, cb1, cb2

    def test_per_message_rows(self, registry):
        index, *_ = self._index()
        summary = campaign_summary(index, registry)
        rows = {r.message_id: r for r in summary.rows}
        assert set(rows) == {"m1", "m2", "m3", "m4"}
        assert rows["m1"].tx_count == 2
        assert int(rows["m1"].total_burned) == 500
        assert rows["m1"].unique_input_addresses == 2
        assert rows["m1"].unique_addresses == 4
        assert rows["m2"].tx_count == 1
        assert rows["m2"].unique_addresses == 2  # change went to an m1 input wallet
        assert rows["m3"].tx_count == 0
        assert rows["m3"].first_time is None

    def test_total_row(self, registry):
        index, *_ = self._index()
        total = campaign_summary(index, registry).total
        assert total.message_id == "TOTAL"
        assert total.tx_count == 3
        assert int(total.total_burned) == 600
        assert total.unique_input_addresses == 3
        assert total.unique_addresses == 5
        assert total.first_time == total.last_time == _noon("2022-02-12")

    def test_baseline_matches_ground_truth(self, baseline_index, baseline, registry):
        _, _, gt = baseline
        summary = campaign_summary(baseline_index, registry)
        doc = campaign_doc(summary)
        for row in doc["messages"] + [doc["total"]]:
            expected = gt["campaign"][row["message_id"]]
            for key in ("tx_count", "total_burned_sat",
                        "unique_addresses", "unique_input_addresses"):
                assert row[key] == expected[key], (row["message_id"], key)


class TestClassification:
    LABELS = {
        "gru-wallet": EntityLabel("GRU", "callout", 0),
        "fsb-wallet": EntityLabel("FSB", "callout", 0),
        "donation-box": EntityLabel("DONATION", "external-file", 0),
        "mixer-pool": EntityLabel("MIXER", "external-file", 0),
    }

    def _classify(self, rtx, registry):
        return classify_transaction(rtx, self.LABELS, registry)

    def test_burn(self, registry):
        rtx = _rtx([(None, Amount(5000), ScriptKind.OP_RETURN, b"GRU to SVR"),
                    ("gru-wallet", Amount(100), ScriptKind.P2PKH, None)],
                   inputs=(("gru-wallet", Amount(6000)),))
        assert self._classify(rtx, registry) == "burn"

    def test_burn_beats_donation(self, registry):
        payload = b"Helping Ukraine with money from GRU hackers"
        rtx = _rtx([(None, Amount(1), ScriptKind.OP_RETURN, payload),
                    ("donation-box", Amount(100), ScriptKind.P2PKH, None)],
                   inputs=(("gru-wallet", Amount(6000)),))
        assert self._classify(rtx, registry) == "burn"

    def test_donation(self, registry):
        payload = b"Helping Ukraine with money from GRU hackers"
        rtx = _rtx([(None, Amount(0), ScriptKind.OP_RETURN, payload),
                    ("donation-box", Amount(100), ScriptKind.P2PKH, None)],
                   inputs=(("gru-wallet", Amount(6000)),))
        assert self._classify(rtx, registry) == "donation"

    def test_payment(self, registry):
        rtx = _rtx([("stranger", Amount(547), ScriptKind.P2PKH, None)],
                   inputs=(("fsb-wallet", Amount(1547)),))
        assert self._classify(rtx, registry) == "payment"

    def test_payment_needs_every_input_labeled(self, registry):
        rtx = _rtx([("stranger", Amount(547), ScriptKind.P2PKH, None)],
                   inputs=(("fsb-wallet", Amount(1000)), ("stranger2", Amount(547))))
        assert self._classify(rtx, registry) == "external"

    def test_mixer_inputs_never_pay(self, registry):
        rtx = _rtx([("gru-wallet", Amount(999_000), ScriptKind.P2PKH, None)],
                   inputs=(("mixer-pool", Amount(1_000_000)),))
        assert self._classify(rtx, registry) == "funding"

    def test_funding_from_unlabeled(self, registry):
        rtx = _rtx([("gru-wallet", Amount(5000), ScriptKind.P2PKH, None)],
                   inputs=(("whoever", Amount(6000)),))
        assert self._classify(rtx, registry) == "funding"

    def test_external_coinbase(self, registry):
        rtx = _rtx([("someone", Amount(50_0000_0000), ScriptKind.P2PKH, None)],
                   inputs=((None, Amount(50_0000_0000)),), is_coinbase=True)
        assert self._classify(rtx, registry) == "external"

    def test_unmatched_opreturn_is_not_burn(self, registry):
        rtx = _rtx([(None, Amount(5000), ScriptKind.OP_RETURN, b"random telemetry"),
                    ("stranger", Amount(100), ScriptKind.P2PKH, None)],
                   inputs=(("whoever", Amount(6000)),))
        assert self._classify(rtx, registry) == "external"

    def test_baseline_bucket_sizes(self, baseline_index, baseline_labels, baseline, registry):
        _, _, gt = baseline
        buckets = classify_all(baseline_index, baseline_labels, registry)
        got = {name: len(txs) for name, txs in buckets.items() if txs}
        assert got == gt["classification_counts"]


class TestQuartiles:
    def test_hand_computed(self):
        values = [Decimal("40.00"), Decimal("120.00")]
        _, (q1, median, q3) = tukey_outliers(values)
        assert (q1, median, q3) == (Decimal("60.00"), Decimal("80.00"), Decimal("100.00"))

    def test_four_point_interpolation(self):
        values = [Decimal(v) for v in ("1.00", "2.00", "3.00", "4.00")]
        _, (q1, median, q3) = tukey_outliers(values)
        assert (q1, median, q3) == (Decimal("1.75"), Decimal("2.50"), Decimal("3.25"))

    @given(st.lists(st.integers(0, 10**6), min_size=5, max_size=25).filter(
        lambda v: len(v) % 4 == 1))
    @settings(max_examples=200, deadline=None)
    def test_exact_positions_match_statistics(self, cents):
        # n = 4k+1 puts every quartile exactly on a data point
        values = [Decimal(c).scaleb(-2) for c in cents]
        _, (q1, median, q3) = tukey_outliers(values)
        ref = statistics.quantiles(cents, n=4, method="inclusive")
        assert [q1, median, q3] == [Decimal(int(r)).scaleb(-2) for r in ref]

    @given(st.lists(st.integers(0, 10**6), min_size=5, max_size=25).filter(
        lambda v: len(v) % 4 == 1))
    @settings(max_examples=200, deadline=None)
    def test_fence_partitions(self, cents):
        values = [Decimal(c).scaleb(-2) for c in cents]
        outliers, (q1, _, q3) = tukey_outliers(values)
        fence = q3 + Decimal("1.5") * (q3 - q1)
        flagged = set(outliers)
        for i, v in enumerate(values):
            assert (v > fence) == (i in flagged)

    def test_single_spike(self):
        values = [Decimal("10.00")] * 4 + [Decimal("100.00")]
        outliers, _ = tukey_outliers(values)
        assert outliers == (4,)


class TestPaymentStats:
    def test_two_entities_one_tx(self):
        labels = {
            "x": EntityLabel("FSB", "callout", 0),
            "y": EntityLabel("GRU", "callout", 0),
        }
        table = _table(**{"2022-02-12": "40000.00"})
        t = _noon("2022-02-12")
        payments = [
            _rtx([("x", Amount(100_000), ScriptKind.P2PKH, None),
                  ("y", Amount(200_000), ScriptKind.P2PKH, None)], time=t, tag=b"p1"),
            _rtx([("x", Amount(300_000), ScriptKind.P2PKH, None),
                  ("nobody", Amount(50), ScriptKind.P2PKH, None)], time=t, tag=b"p2"),
        ]
        stats = payment_stats(payments, labels, table)
        fsb = stats.rows["FSB"]
        assert fsb.tx_count == 2
        assert fsb.total_sat == 400_000
        assert fsb.total_usd == Decimal("160.00")
        assert fsb.mean_usd == Decimal("80.00")
        assert fsb.median_usd == Decimal("80.00")
        assert (fsb.min_usd, fsb.max_usd) == (Decimal("40.00"), Decimal("120.00"))
        assert fsb.outlier_count == 0
        gru = stats.rows["GRU"]
        assert (gru.tx_count, gru.total_usd) == (1, Decimal("80.00"))
        assert "nobody" not in str(stats.rows)
        assert len(stats.series["FSB"]) == 2

    def test_outlier_flagging(self):
        labels = {"x": EntityLabel("FSB", "callout", 0)}
        table = _table(**{"2022-02-12": "40000.00"})
        t = _noon("2022-02-12")
        sats = [25_000] * 4 + [250_000]  # 10 USD x4 then 100 USD
        payments = [
            _rtx([("x", Amount(v), ScriptKind.P2PKH, None)], time=t, tag=bytes([i]))
            for i, v in enumerate(sats)
        ]
        stats = payment_stats(payments, labels, table)
        row = stats.rows["FSB"]
        assert row.outlier_count == 1
        assert row.outlier_mean_usd == Decimal("100.00")
        assert row.outlier_min_usd == row.outlier_max_usd == Decimal("100.00")
        flags = [e.is_outlier for e in stats.series["FSB"]]
        assert flags == [False, False, False, False, True]

    def test_baseline_rows_match_ground_truth(self, baseline_index, baseline_labels,
                                              baseline, registry):
        _, _, gt = baseline
        table = PriceTable.from_rows(gt["prices"])
        buckets = classify_all(baseline_index, baseline_labels, registry)
        stats = payment_stats(buckets["payment"], baseline_labels, table)
        doc = payment_stats_doc(stats)
        got = {row["entity"]: row for row in doc["entities"]}
        for entity, expected in gt["payments"].items():
            row = got[entity]
            for key, value in expected.items():
                assert row[key] == value, (entity, key)


class TestPeelTrace:
    def _index(self):
        cb = _coinbase(0, 100_000, _p2pkh("src"))
        p1 = _spend(cb, 0, [(10_000, _p2pkh("w1")), (85_000, _p2pkh("c1"))])
        p2 = Transaction(2, (TxInput(OutPoint(txid(p1), 1), b"", 0xFFFFFFFF),),
                         (TxOutput(Amount(80_000), _p2pkh("c2")),
                          TxOutput(Amount(4_000), _p2pkh("w2"))), 0)
        blocks = [
            _block([cb], _noon("2022-02-01")),
            _block([_coinbase(1, 100_000, _p2pkh("m1")), p1], _noon("2022-02-02")),
            _block([_coinbase(2, 100_000, _p2pkh("m2")), p2], _noon("2022-02-03")),
        ]
        index = build_index(blocks)
        return index, cb, p1, p2

    def test_largest_follows_continuation(self):
        index, cb, p1, p2 = self._index()
        trace = trace_peel_chain(index, OutPoint(txid(cb), 0))
        assert trace.termination == "no_successor"
        assert [(h.txid, h.vout) for h in trace.hops] == [(txid(p1), 1), (txid(p2), 0)]
        assert [int(h.value) for h in trace.hops] == [85_000, 80_000]

    def test_max_hops(self):
        index, cb, p1, _ = self._index()
        trace = trace_peel_chain(index, OutPoint(txid(cb), 0), max_hops=1)
        assert trace.termination == "max_hops"
        assert len(trace.hops) == 1

    def test_reached_labeled(self):
        index, cb, p1, p2 = self._index()
        labels = {_addr_of(index, p2, 0): EntityLabel("EXCHANGE", "external-file", 0)}
        trace = trace_peel_chain(index, OutPoint(txid(cb), 0), labels=labels)
        assert trace.termination == "reached_labeled"
        assert len(trace.hops) == 2

    def test_unlabeled_heuristic_detours(self):
        index, cb, p1, _ = self._index()
        labels = {_addr_of(index, p1, 1): EntityLabel("MIXER", "external-file", 0)}
        trace = trace_peel_chain(index, OutPoint(txid(cb), 0),
                                 heuristic="unlabeled", labels=labels)
        # the big output is labeled, so the small one is preferred; it is unspent
        assert trace.hops[0].vout == 0
        assert trace.termination == "no_successor"
        largest = trace_peel_chain(index, OutPoint(txid(cb), 0), labels=labels)
        assert largest.hops[0].vout == 1
        assert largest.termination == "reached_labeled"

    def test_unlabeled_falls_back_when_all_labeled(self):
        index, cb, p1, _ = self._index()
        labels = {
            _addr_of(index, p1, 0): EntityLabel("MIXER", "external-file", 0),
            _addr_of(index, p1, 1): EntityLabel("MIXER", "external-file", 0),
        }
        trace = trace_peel_chain(index, OutPoint(txid(cb), 0),
                                 heuristic="unlabeled", labels=labels)
        assert trace.hops[0].vout == 1  # biggest overall

    def test_value_tie_breaks_to_lowest_vout(self):
        cb = _coinbase(0, 100_000, _p2pkh("src"))
        even = _spend(cb, 0, [(49_500, _p2pkh("a")), (49_500, _p2pkh("b"))])
        index = build_index([
            _block([cb], _noon("2022-02-01")),
            _block([_coinbase(1, 100_000, _p2pkh("m")), even], _noon("2022-02-02")),
        ])
        trace = trace_peel_chain(index, OutPoint(txid(cb), 0))
        assert trace.hops[0].vout == 0

    def test_unknown_heuristic(self):
        index, cb, *_ = self._index()
        with pytest.raises(BadConfig):
            trace_peel_chain(index, OutPoint(txid(cb), 0), heuristic="weirdest")

    def test_unspent_start(self):
        index, cb, p1, _ = self._index()
        trace = trace_peel_chain(index, OutPoint(txid(p1), 0))
        assert trace.hops == ()
        assert trace.termination == "no_successor"

    def test_baseline_hops_match_ground_truth(self, baseline_index, baseline,
                                              baseline_labels):
        _, _, gt = baseline
        start = OutPoint(TxId.from_hex(gt["peel"]["start"]["txid"]),
                         gt["peel"]["start"]["vout"])
        budget = len(gt["peel"]["hops"]) + 5
        unlabeled = trace_peel_chain(baseline_index, start, max_hops=budget)
        assert unlabeled.termination == gt["peel"]["termination_unlabeled"]
        labeled = trace_peel_chain(baseline_index, start, max_hops=budget,
                                   labels=baseline_labels)
        assert labeled.termination == gt["peel"]["termination_labeled"]
        got = peel_trace_doc(labeled)["hops"]
        assert got == gt["peel"]["hops"]


class TestCounterparty:
    def _index(self):
        cb0 = _coinbase(0, 10_000_000, _p2pkh("exchange-hot"))
        cb1 = _coinbase(1, 10_000_000, _p2pkh("report"))
        deposit = _spend(cb0, 0, [(1_248_500, _p2pkh("report")),
                                  (8_750_500, _p2pkh("exchange-hot"))])
        payout = _spend(cb1, 0, [(330_200, _p2pkh("ransom-wallet")),
                                 (9_668_800, _p2pkh("report"))])
        blocks = [
            _block([cb0], _noon("2022-02-20")),
            _block([cb1], _noon("2022-02-21")),
            _block([_coinbase(2, 10_000_000, _p2pkh("m")), deposit], _noon("2022-02-24")),
            _block([_coinbase(3, 10_000_000, _p2pkh("m2")), payout], _noon("2022-02-25")),
        ]
        index = build_index(blocks)
        report = _addr_of(index, cb1)
        labels = {
            _addr_of(index, cb0): EntityLabel("EXCHANGE", "external-file", 0),
            _addr_of(index, payout, 0): EntityLabel("RANSOMWARE", "external-file", 0),
        }
        return index, report, labels, deposit, payout

    def test_in_and_out_events(self):
        index, report, labels, deposit, payout = self._index()
        events = counterparty_report(index, labels, report)
        assert [(e.entity, e.direction, int(e.value)) for e in events] == [
            ("EXCHANGE", "in", 1_248_500),
            ("RANSOMWARE", "out", 330_200),
        ]
        assert events[0].txid == txid(deposit)
        assert events[1].txid == txid(payout)
        assert all(e.usd is None for e in events)

    def test_self_change_not_an_event(self):
        index, report, labels, _, payout = self._index()
        events = counterparty_report(index, labels, report)
        # the change back to the report address must not add an "out" to itself
        assert all(e.entity in ("EXCHANGE", "RANSOMWARE") for e in events)
        assert len(events) == 2

    def test_usd_when_priced(self):
        index, report, labels, *_ = self._index()
        table = _table(**{"2022-02-24": "37372.00"})
        events = counterparty_report(index, labels, report, price_table=table)
        assert events[0].usd == Decimal("466.59")
        assert events[1].usd is None  # 02-25 not in the table

    def test_unlabeled_traffic_ignored(self):
        index, report, _, _, _ = self._index()
        assert counterparty_report(index, {}, report) == []

    def test_baseline_event_count(self, baseline_index, baseline_labels, baseline):
        _, _, gt = baseline
        table = PriceTable.from_rows(gt["prices"])
        events = counterparty_report(baseline_index, baseline_labels,
                                     gt["report_address"], price_table=table)
        doc = counterparty_doc(events)
        assert doc["events"] == gt["counterparty_events"]


class TestDonationReport:
    def _index(self, registry):
        cb = _coinbase(0, 100_000, _p2pkh("gru-src"))
        payload = b"Helping Ukraine with money from GRU hackers"
        dono = _spend(cb, 0, [
            (0, op_return_script(payload)),
            (20_000, _p2pkh("dono-box")),
            (500, _p2pkh("gru-src")),
            (78_500, _p2pkh("gru-src")),
        ])
        index = build_index([
            _block([cb], _noon("2022-03-10")),
            _block([_coinbase(1, 100_000, _p2pkh("m")), dono], _noon("2022-03-14")),
        ])
        labels = {
            _addr_of(index, cb): EntityLabel("GRU", "callout", 0),
            _addr_of(index, dono, 1): EntityLabel("DONATION", "external-file", 0),
        }
        return index, labels

    def test_single_donation(self, registry):
        index, labels = self._index(registry)
        table = _table(**{"2022-03-14": "40000.00"})
        report = donation_report(index, registry, labels, table)
        assert report.tx_count == 1
        assert report.total_outputs == 4
        assert report.outputs_to_donation == 1
        assert report.dust_outputs == 1
        assert report.sat_to_donation == 20_000
        assert report.sat_total == 99_000
        assert report.usd_to_donation == Decimal("8.00")
        assert report.usd_total == Decimal("39.60")
        assert report.output_mean_usd == Decimal("13.20")
        assert report.output_min_usd == Decimal("0.20")

    def test_dust_threshold_argument(self, registry):
        index, labels = self._index(registry)
        table = _table(**{"2022-03-14": "40000.00"})
        report = donation_report(index, registry, labels, table, dust_threshold=30_000)
        assert report.dust_outputs == 2  # the 20k donation output now counts

    def test_baseline_matches_ground_truth(self, baseline_index, baseline_labels,
                                           baseline, registry):
        _, _, gt = baseline
        table = PriceTable.from_rows(gt["prices"])
        report = donation_report(baseline_index, registry, baseline_labels, table)
        doc = donation_doc(report)
        doc.pop("schema_version")
        assert doc == gt["donation"]


class TestExports:
    def test_graph_doc(self, tmp_path):
        labels = {"sender": EntityLabel("FSB", "callout", 0),
                  "victim": EntityLabel("RANSOMWARE", "external-file", 0)}
        rtx = _rtx([("victim", Amount(1000), ScriptKind.P2PKH, None),
                    ("sender", Amount(200), ScriptKind.P2PKH, None)],
                   inputs=(("sender", Amount(1300)),), time=100, tag=b"g")
        dot = tmp_path / "graph.dot"
        jsn = tmp_path / "graph.json"
        doc = export_graph([rtx], labels, str(dot), str(jsn))
        assert [n["address"] for n in doc["nodes"]] == ["sender", "victim"]
        assert len(doc["edges"]) == 1  # change back to the sender is not a transfer
        edge = doc["edges"][0]
        assert (edge["from"], edge["to"], edge["value_sat"]) == ("sender", "victim", 1000)
        assert json.loads(jsn.read_text()) == doc
        dot_text = dot.read_text()
        assert dot_text.startswith("digraph payments {")
        assert '"sender" -> "victim"' in dot_text

    def test_graph_multi_input_uses_smallest_address(self):
        rtx = _rtx([("out", Amount(10), ScriptKind.P2PKH, None)],
                   inputs=(("zz", Amount(6)), ("aa", Amount(6))), tag=b"g2")
        doc = export_graph([rtx], {})
        assert doc["edges"][0]["from"] == "aa"

    def test_timeline_csv_and_svg(self, tmp_path):
        entries = [
            TimelineEntry(_noon("2022-02-12"), TxId(b"\x01" * 32), Decimal("1.00"), False),
            TimelineEntry(_noon("2022-02-13"), TxId(b"\x02" * 32), Decimal("9.00"), True),
        ]
        csv_path = tmp_path / "timeline.csv"
        svg_path = tmp_path / "timeline.svg"
        count = export_timeline(entries, str(csv_path), str(svg_path))
        assert count == 2
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "#schema_version=1"
        assert lines[1] == "timestamp,txid,usd_value,is_outlier"
        assert lines[2].startswith("2022-02-12T12:00:00Z,")
        assert lines[2].endswith(",1.00,false")
        assert lines[3].endswith(",9.00,true")
        svg = svg_path.read_text()
        assert svg.count("<circle") == 2
        assert "#d62728" in svg  # outlier color present

    def test_burn_timeline_values(self, baseline_index, baseline, registry):
        _, _, gt = baseline
        table = PriceTable.from_rows(gt["prices"])
        series = burn_series(baseline_index, campaign_only=True, registry=registry)
        entries = burn_timeline(series, table)
        assert len(entries) == len(series.records)
        total = sum(int(r.value) for r in series.records)
        assert total == sum(gt["burn_daily_campaign"].values())


class TestDocs:
    def test_docs_are_json_stable(self, baseline_index, baseline_labels,
                                  baseline, registry):
        _, _, gt = baseline
        table = PriceTable.from_rows(gt["prices"])
        summary = campaign_summary(baseline_index, registry)
        series = burn_series(baseline_index, registry=registry)
        docs = [
            campaign_doc(summary),
            burn_series_doc(series),
            donation_doc(donation_report(baseline_index, registry,
                                         baseline_labels, table)),
        ]
        for doc in docs:
            assert doc["schema_version"] == 1
            text = json.dumps(doc, sort_keys=True)
            assert json.loads(text) == doc
