"""Command-line entry point.

Exit codes: 0 success, 1 verification mismatch, 2 usage error, 3 data error.
Errors are reported as JSON on stderr. Commands are hermetic: outputs
depend only on the given inputs (block timestamps, never the wall clock),
so the same invocation always produces byte-identical files.
"""

import argparse
import csv
import json
import os
import sys
from datetime import date
from decimal import Decimal, InvalidOperation
from typing import Optional

from . import __version__
from .analytics import (PriceTable, burn_series, burn_series_doc, campaign_doc,
                        campaign_summary, classify_all, counterparty_doc,
                        counterparty_report, donation_doc, donation_report,
                        export_graph, export_timeline, payment_stats,
                        payment_stats_doc, peel_trace_doc, trace_peel_chain,
                        tx_date, usd_value)
from .attrib import (EntityLabel, MessageRegistry, cluster_stats, cospend_clusters,
                     default_registry, export_clusters_csv, export_labels,
                     extend_labels_by_cluster, find_callouts, load_labels,
                     propagate_labels)
from .errors import ToolkitError, BadConfig
from .ledger import LedgerIndex, build_index, load_index, save_index
from .synth import build_scenario, scenario_from_file
from .wire import OutPoint, TxId, parse_block_file

SCHEMA_VERSION = 1

USD_TOLERANCE = Decimal("0.01")


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fail(exc: Exception) -> None:
    doc = {"schema_version": SCHEMA_VERSION,
           "error": {"type": type(exc).__name__, "message": str(exc)}}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")


def _date_arg(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad date {text!r}: {exc}") from exc


def _outpoint_arg(text: str) -> OutPoint:
    tid, sep, vout = text.rpartition(":")
    if not sep or not vout.isdigit():
        raise argparse.ArgumentTypeError(f"expected txid:vout, got {text!r}")
    try:
        return OutPoint(TxId.from_hex(tid), int(vout))
    except ToolkitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _load_registry(path: Optional[str]) -> MessageRegistry:
    return default_registry() if path is None else MessageRegistry.from_file(path)


def _propagated(index: LedgerIndex, registry: MessageRegistry,
                labels_path: Optional[str]):
    seeds = load_labels(labels_path) if labels_path else None
    callouts = find_callouts(index, registry)
    labels, conflicts = propagate_labels(index, registry, seed_labels=seeds,
                                         callouts=callouts)
    return labels, conflicts, callouts


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _conflict_doc(conflicts) -> list:
    return [{"address": c.address, "kept": c.kept, "rejected": c.rejected,
             "txid": c.txid.display if c.txid is not None else None, "time": c.time}
            for c in conflicts]


def _stats_doc(stats: dict, violations: list) -> dict:
    rows = []
    for entity in sorted(stats):
        r = stats[entity]
        rows.append({"entity": r.entity, "address_count": r.address_count,
                     "cluster_count": r.cluster_count,
                     "mean_size": f"{r.mean_size:.6f}", "std_size": f"{r.std_size:.6f}",
                     "mean_tx_count": f"{r.mean_tx_count:.6f}",
                     "std_tx_count": f"{r.std_tx_count:.6f}"})
    return {"schema_version": SCHEMA_VERSION, "entities": rows,
            "violations": [{"cluster_id": v.cluster_id, "entities": list(v.entities)}
                           for v in violations]}


# -- commands ------------------------------------------------------------


def cmd_ingest(args) -> int:
    if os.path.isdir(args.blockdir):
        files = sorted(
            os.path.join(args.blockdir, name) for name in os.listdir(args.blockdir)
            if name.endswith(".dat"))
    elif os.path.isfile(args.blockdir):
        files = [args.blockdir]
    else:
        raise BadConfig(f"no such block source: {args.blockdir}")
    if not files:
        raise BadConfig(f"no .dat files under {args.blockdir}")
    index = LedgerIndex(args.network)
    for path in files:
        with open(path, "rb") as fh:
            for block in parse_block_file(fh, args.network):
                index.apply_block(block)
    save_index(index, args.index)
    _emit(index.report())
    return 0


def cmd_scan_opreturn(args) -> int:
    index = load_index(args.index)
    registry = _load_registry(args.registry)
    date_range = None
    if args.date_from is not None or args.date_to is not None:
        date_range = (args.date_from, args.date_to)
    series = burn_series(index, date_range=date_range,
                         campaign_only=args.campaign_only, registry=registry)
    if args.out:
        out = _ensure_out(args.out)
        with open(os.path.join(out, "burn_daily.csv"), "w", newline="") as fh:
            fh.write("#schema_version=1\n")
            writer = csv.writer(fh)
            writer.writerow(["date", "burned_sat"])
            for day, value in series.daily.items():
                writer.writerow([day.isoformat(), int(value)])
        with open(os.path.join(out, "opreturn_records.csv"), "w", newline="") as fh:
            fh.write("#schema_version=1\n")
            writer = csv.writer(fh)
            writer.writerow(["txid", "time", "value_sat", "payload_hex", "message_id"])
            for r in series.records:
                writer.writerow([r.txid.display, r.time, int(r.value),
                                 r.payload.hex() if r.payload is not None else "",
                                 r.message_id or ""])
    _emit(burn_series_doc(series))
    return 0


def cmd_attrib(args) -> int:
    index = load_index(args.index)
    registry = _load_registry(args.registry)
    labels, conflicts, callouts = _propagated(index, registry, args.labels)
    clusters = cospend_clusters(index, exclude_txids=sorted(callouts),
                                seed_addresses=sorted(labels))
    stats, violations = cluster_stats(clusters, labels, index)
    extended, added = extend_labels_by_cluster(labels, clusters)
    if args.out:
        out = _ensure_out(args.out)
        export_labels(extended, os.path.join(out, "labels.csv"))
        export_clusters_csv(clusters, extended, os.path.join(out, "clusters.csv"))
        with open(os.path.join(out, "cluster_stats.json"), "w") as fh:
            fh.write(json.dumps(_stats_doc(stats, violations), indent=2, sort_keys=True) + "\n")
    doc = _stats_doc(stats, violations)
    doc["labels"] = len(extended)
    doc["cluster_propagated"] = added
    doc["clusters"] = len(clusters)
    doc["conflicts"] = _conflict_doc(conflicts)
    _emit(doc)
    return 0


def cmd_campaign(args) -> int:
    index = load_index(args.index)
    registry = _load_registry(args.registry)
    summary = campaign_summary(index, registry)
    doc = campaign_doc(summary)
    if args.out:
        out = _ensure_out(args.out)
        with open(os.path.join(out, "campaign.json"), "w") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        with open(os.path.join(out, "campaign.csv"), "w", newline="") as fh:
            fh.write("#schema_version=1\n")
            writer = csv.writer(fh)
            writer.writerow(["message_id", "tx_count", "first_time", "last_time",
                             "total_burned_sat", "unique_addresses",
                             "unique_input_addresses"])
            for row in list(summary.rows) + [summary.total]:
                writer.writerow([row.message_id, row.tx_count,
                                 row.first_time if row.first_time is not None else "",
                                 row.last_time if row.last_time is not None else "",
                                 int(row.total_burned), row.unique_addresses,
                                 row.unique_input_addresses])
    _emit(doc)
    return 0


def cmd_payments(args) -> int:
    index = load_index(args.index)
    registry = _load_registry(args.registry)
    prices = PriceTable.from_csv(args.prices)
    labels, conflicts, _ = _propagated(index, registry, args.labels)
    buckets = classify_all(index, labels, registry, dust_threshold=args.dust_threshold)
    stats = payment_stats(buckets["payment"], labels, prices)
    donation = donation_report(index, registry, labels, prices,
                               dust_threshold=args.dust_threshold)
    doc = payment_stats_doc(stats)
    doc["donation"] = donation_doc(donation)
    doc["classification_counts"] = {k: len(v) for k, v in buckets.items()}
    doc["conflicts"] = _conflict_doc(conflicts)
    if args.out:
        out = _ensure_out(args.out)
        with open(os.path.join(out, "payment_stats.json"), "w") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        entries = [e for entity in sorted(stats.series)
                   for e in stats.series[entity]]
        export_timeline(entries, os.path.join(out, "timeline.csv"),
                        os.path.join(out, "timeline.svg"))
        export_graph(buckets["payment"], labels,
                     dot_path=os.path.join(out, "graph.dot"),
                     json_path=os.path.join(out, "graph.json"))
    _emit(doc)
    return 0


def cmd_trace(args) -> int:
    index = load_index(args.index)
    labels = None
    if args.labels is not None:
        registry = _load_registry(args.registry)
        labels, _, _ = _propagated(index, registry, args.labels)
    trace = trace_peel_chain(index, args.start, max_hops=args.max_hops,
                             heuristic=args.heuristic, labels=labels)
    _emit(peel_trace_doc(trace))
    return 0


def cmd_synth(args) -> int:
    scenario = scenario_from_file(args.scenario)
    raw, gt = build_scenario(scenario)
    out = _ensure_out(args.out)
    with open(os.path.join(out, "blocks.dat"), "wb") as fh:
        fh.write(raw)
    with open(os.path.join(out, "ground_truth.json"), "w") as fh:
        fh.write(json.dumps(gt, indent=2, sort_keys=True) + "\n")
    seeds = {a: EntityLabel(e, s, 0) for a, e, s in gt["external_labels"]}
    export_labels(seeds, os.path.join(out, "labels.csv"))
    PriceTable.from_rows(gt["prices"]).to_csv(os.path.join(out, "prices.csv"))
    _emit({"schema_version": SCHEMA_VERSION, "blocks": gt["blocks"],
           "transactions": gt["transactions"], "bytes": len(raw)})
    return 0


# -- verify --------------------------------------------------------------


class _Differ:
    def __init__(self):
        self.checks = 0
        self.mismatches = []

    def equal(self, name: str, got, want) -> None:
        self.checks += 1
        if got != want:
            self.mismatches.append(f"{name}: expected {want!r}, got {got!r}")

    def usd(self, name: str, got: str, want: str) -> None:
        self.checks += 1
        try:
            delta = abs(Decimal(got) - Decimal(want))
        except InvalidOperation:
            self.mismatches.append(f"{name}: unparseable USD {got!r} vs {want!r}")
            return
        if delta > USD_TOLERANCE:
            self.mismatches.append(f"{name}: expected {want} within $0.01, got {got}")


def _verify_directory(out_dir: str) -> dict:
    gt_path = os.path.join(out_dir, "ground_truth.json")
    try:
        with open(gt_path) as fh:
            gt = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadConfig(f"cannot read {gt_path}: {exc}") from exc
    network = gt.get("network", "regtest")
    try:
        with open(os.path.join(out_dir, "blocks.dat"), "rb") as fh:
            blocks = list(parse_block_file(fh, network))
    except OSError as exc:
        raise BadConfig(f"cannot read blocks.dat: {exc}") from exc
    index = build_index(blocks, network)
    seeds = load_labels(os.path.join(out_dir, "labels.csv"))
    prices = PriceTable.from_csv(os.path.join(out_dir, "prices.csv"))
    registry = (default_registry() if gt.get("registry") is None
                else MessageRegistry.from_dict(gt["registry"]))

    d = _Differ()
    report = index.report()
    d.equal("blocks", report["blocks"], gt["blocks"])
    d.equal("transactions", report["transactions"], gt["transactions"])
    d.equal("missing_prevouts", report["missing_prevouts"], 0)

    callouts = find_callouts(index, registry)
    labels, conflicts = propagate_labels(index, registry, seed_labels=seeds,
                                         callouts=callouts)
    d.equal("label_conflicts", len(conflicts), gt["conflicts"])
    got_labels = {a: l.entity for a, l in labels.items()}
    if got_labels != gt["labels"]:
        wrong = sorted(set(got_labels.items()) ^ set(gt["labels"].items()))
        d.mismatches.append(f"labels: {len(wrong)} address assignments differ")
    d.checks += 1
    counts: dict = {}
    for label in labels.values():
        counts[label.entity] = counts.get(label.entity, 0) + 1
    d.equal("label_counts", counts, gt["label_counts"])

    clusters = cospend_clusters(index, exclude_txids=sorted(callouts),
                                seed_addresses=sorted(labels))
    stats, violations = cluster_stats(clusters, labels, index)
    d.equal("cluster_violations", len(violations), gt["cluster_violations"])
    got_stats = {entity: {
        "address_count": row.address_count, "cluster_count": row.cluster_count,
        "mean_size": f"{row.mean_size:.6f}", "std_size": f"{row.std_size:.6f}",
        "mean_tx_count": f"{row.mean_tx_count:.6f}",
        "std_tx_count": f"{row.std_tx_count:.6f}"}
        for entity, row in stats.items()}
    for entity in sorted(set(got_stats) | set(gt["cluster_stats"])):
        d.equal(f"cluster_stats.{entity}", got_stats.get(entity),
                gt["cluster_stats"].get(entity))

    series = burn_series(index, registry=registry)
    campaign_series = burn_series(index, campaign_only=True, registry=registry)
    d.equal("burn_daily",
            {day.isoformat(): int(v) for day, v in series.daily.items()},
            gt["burn_daily"])
    d.equal("burn_daily_campaign",
            {day.isoformat(): int(v) for day, v in campaign_series.daily.items()},
            gt["burn_daily_campaign"])

    summary = campaign_summary(index, registry)
    rows = {row.message_id: row for row in summary.rows}
    rows["TOTAL"] = summary.total
    d.equal("campaign.messages", sorted(rows), sorted(gt["campaign"]))
    for message_id, expect in sorted(gt["campaign"].items()):
        row = rows.get(message_id)
        if row is None:
            continue
        got = {"tx_count": row.tx_count, "total_burned_sat": int(row.total_burned),
               "first_time": row.first_time, "last_time": row.last_time,
               "unique_addresses": row.unique_addresses,
               "unique_input_addresses": row.unique_input_addresses}
        d.equal(f"campaign.{message_id}", got, expect)

    buckets = classify_all(index, labels, registry)
    d.equal("classification_counts",
            {k: len(v) for k, v in buckets.items() if v},
            gt["classification_counts"])

    stats_doc = payment_stats_doc(payment_stats(buckets["payment"], labels, prices))
    got_payments = {row["entity"]: row for row in stats_doc["entities"]}
    d.equal("payments.entities", sorted(got_payments), sorted(gt["payments"]))
    for entity, expect in sorted(gt["payments"].items()):
        row = got_payments.get(entity)
        if row is None:
            continue
        for field in ("tx_count", "total_sat", "outlier_count"):
            d.equal(f"payments.{entity}.{field}", row[field], expect[field])
        for field in ("total_usd", "mean_usd", "median_usd", "min_usd", "max_usd",
                      "outlier_mean_usd", "outlier_min_usd", "outlier_max_usd"):
            d.usd(f"payments.{entity}.{field}", row[field], expect[field])

    if gt.get("donation") is not None:
        don = donation_doc(donation_report(index, registry, labels, prices))
        expect = gt["donation"]
        for field in ("tx_count", "total_outputs", "outputs_to_donation",
                      "dust_outputs", "sat_to_donation", "sat_total"):
            d.equal(f"donation.{field}", don[field], expect[field])
        for field in ("usd_to_donation", "usd_total", "output_mean_usd",
                      "output_min_usd"):
            d.usd(f"donation.{field}", don[field], expect[field])

    if gt.get("report_address"):
        events = counterparty_doc(counterparty_report(
            index, labels, gt["report_address"], prices))["events"]
        expect_events = gt["counterparty_events"]
        d.equal("counterparty.count", len(events), len(expect_events))
        for i, (got, expect) in enumerate(zip(events, expect_events)):
            for field in ("time", "txid", "entity", "direction", "value_sat"):
                d.equal(f"counterparty[{i}].{field}", got[field], expect[field])
            d.usd(f"counterparty[{i}].usd", got["usd"], expect["usd"])

    if gt.get("peel") is not None:
        start = OutPoint(TxId.from_hex(gt["peel"]["start"]["txid"]),
                         gt["peel"]["start"]["vout"])
        budget = len(gt["peel"]["hops"]) + 5
        labeled = trace_peel_chain(index, start, max_hops=budget, labels=labels)
        unlabeled = trace_peel_chain(index, start, max_hops=budget)
        got_hops = [{"txid": h.txid.display, "vout": h.vout, "value_sat": int(h.value),
                     "address": h.address} for h in labeled.hops]
        d.equal("peel.hops", got_hops, gt["peel"]["hops"])
        d.equal("peel.termination_labeled", labeled.termination,
                gt["peel"]["termination_labeled"])
        d.equal("peel.termination_unlabeled", unlabeled.termination,
                gt["peel"]["termination_unlabeled"])

    return {"schema_version": SCHEMA_VERSION, "checks": d.checks,
            "mismatches": d.mismatches}


def cmd_verify(args) -> int:
    doc = _verify_directory(args.out)
    _emit(doc)
    return 1 if doc["mismatches"] else 0


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burntrace",
        description="OP_RETURN burn-campaign forensics over raw Bitcoin block files.")
    parser.add_argument("--version", action="version", version=f"burntrace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse block files into a persistent index")
    p.add_argument("blockdir", help="block file or directory of .dat files")
    p.add_argument("--index", required=True, help="index snapshot to write")
    p.add_argument("--network", default="mainnet",
                   choices=["mainnet", "testnet", "regtest"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("scan-opreturn", help="per-transaction OP_RETURN records and daily burn totals")
    p.add_argument("--index", required=True)
    p.add_argument("--from", dest="date_from", type=_date_arg, default=None,
                   metavar="DATE")
    p.add_argument("--to", dest="date_to", type=_date_arg, default=None, metavar="DATE")
    p.add_argument("--campaign-only", action="store_true",
                   help="restrict to registry-matched messages")
    p.add_argument("--registry", default=None, help="message registry JSON")
    p.add_argument("--out", default=None, help="directory for CSV exports")
    p.set_defaults(func=cmd_scan_opreturn)

    p = sub.add_parser("attrib", help="propagate labels and run co-spend clustering")
    p.add_argument("--index", required=True)
    p.add_argument("--labels", default=None, help="seed label CSV")
    p.add_argument("--registry", default=None)
    p.add_argument("--out", default=None, help="directory for label/cluster exports")
    p.set_defaults(func=cmd_attrib)

    p = sub.add_parser("campaign", help="per-message campaign summary")
    p.add_argument("--index", required=True)
    p.add_argument("--registry", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("payments", help="per-entity payment statistics, timeline, graph")
    p.add_argument("--index", required=True)
    p.add_argument("--prices", required=True, help="date,usd_per_btc CSV")
    p.add_argument("--labels", default=None, help="seed label CSV")
    p.add_argument("--registry", default=None)
    p.add_argument("--dust-threshold", type=int, default=1000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_payments)

    p = sub.add_parser("trace", help="follow a peel chain from an outpoint")
    p.add_argument("--index", required=True)
    p.add_argument("--start", required=True, type=_outpoint_arg, metavar="TXID:VOUT")
    p.add_argument("--max-hops", type=int, default=20)
    p.add_argument("--heuristic", choices=["largest", "unlabeled"], default="largest")
    p.add_argument("--labels", default=None,
                   help="seed label CSV; labeled addresses stop the trace")
    p.add_argument("--registry", default=None)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("synth", help="generate a synthetic chain with ground truth")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="re-analyze a synth directory against its ground truth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ToolkitError as exc:
        _fail(exc)
        return 3
    except OSError as exc:
        _fail(exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
