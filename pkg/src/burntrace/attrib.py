"""Callout decoding, label propagation, co-spend clustering, cluster stats."""

import csv
import json
import math
import unicodedata
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional

import numpy as np

from ._kernels import union_groups
from .errors import BadConfig, BadLabel
from .ledger import LedgerIndex, ResolvedTransaction, resolve_all
from .script import CalloutText, decode_payload_text, parse_address
from .wire import TxId

ENTITIES = (
    "GRU",
    "SVR",
    "FSB",
    "MIXER",
    "DONATION",
    "EXCHANGE",
    "RANSOMWARE",
    "GAMBLING",
    "UNKNOWN",
)

LABEL_SOURCES = ("callout", "external-file", "cluster-propagated")


@dataclass(frozen=True)
class EntityLabel:
    entity: str
    source: str
    first_seen: int


@dataclass(frozen=True)
class LabelConflict:
    address: str
    kept: str
    rejected: str
    txid: Optional[TxId]
    time: int


@dataclass(frozen=True)
class RegistryMessage:
    message_id: str
    text: str
    sender: str
    receiver: str
    aliases: tuple = ()


@dataclass(frozen=True)
class Callout:
    message_id: str
    raw: bytes
    decoded: str
    sender: str
    receiver: str


def _norm(text: str) -> str:
    return unicodedata.normalize("NFC", text)


class MessageRegistry:
    """Known callout messages plus the "X to Y" fallback pattern.

    Exact matches (including configured aliases, e.g. Cyrillic originals)
    take precedence over the separator fallback.
    """

    def __init__(self, messages: Iterable[RegistryMessage], separators: tuple = (" to ",)):
        self.messages = tuple(messages)
        self.separators = tuple(separators)
        self._exact: dict = {}
        for msg in self.messages:
            for variant in (msg.text, *msg.aliases):
                key = _norm(variant)
                existing = self._exact.get(key)
                if existing is not None and existing.message_id != msg.message_id:
                    raise BadConfig(f"registry text {variant!r} maps to two messages")
                self._exact[key] = msg

    def by_id(self, message_id: str) -> RegistryMessage:
        for msg in self.messages:
            if msg.message_id == message_id:
                return msg
        raise BadConfig(f"unknown message id {message_id!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "MessageRegistry":
        try:
            raw_messages = doc["messages"]
        except (TypeError, KeyError) as exc:
            raise BadConfig("registry document missing 'messages'") from exc
        messages = []
        for entry in raw_messages:
            try:
                msg = RegistryMessage(
                    message_id=entry["id"],
                    text=entry["text"],
                    sender=entry["sender"],
                    receiver=entry["receiver"],
                    aliases=tuple(entry.get("aliases", ())),
                )
            except (TypeError, KeyError) as exc:
                raise BadConfig(f"malformed registry entry: {entry!r}") from exc
            for entity in (msg.sender, msg.receiver):
                if entity not in ENTITIES:
                    raise BadConfig(f"registry entity {entity!r} not in {ENTITIES}")
            messages.append(msg)
        separators = tuple(doc.get("separators", (" to ",)))
        return cls(messages, separators)

    @classmethod
    def from_file(cls, path: str) -> "MessageRegistry":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise BadConfig(f"cannot read registry {path}: {exc}") from exc
        return cls.from_dict(doc)


def default_registry() -> MessageRegistry:
    doc = json.loads(resources.files("burntrace").joinpath("data/registry.json").read_text())
    return MessageRegistry.from_dict(doc)


def match_callout(text, registry: MessageRegistry) -> Optional[Callout]:
    """Match decoded payload text against the registry, else the fallback."""
    if isinstance(text, CalloutText):
        raw, decoded = text.raw, text.decoded
    else:
        raw, decoded = text.encode("utf-8"), text
    decoded = _norm(decoded)
    msg = registry._exact.get(decoded)
    if msg is not None:
        return Callout(msg.message_id, raw, decoded, msg.sender, msg.receiver)
    first_sentence = decoded.split(".", 1)[0]
    for sep in registry.separators:
        if sep not in first_sentence:
            continue
        left, _, right = first_sentence.partition(sep)
        left, right = left.strip(), right.strip()
        if left in ENTITIES and right in ENTITIES:
            return Callout(f"pattern:{left}-to-{right}", raw, decoded, left, right)
    return None


def find_callouts(index: LedgerIndex, registry: MessageRegistry) -> dict:
    """Map txid bytes -> Callout for every registry-matched transaction.

    The first matching OP_RETURN output decides; real campaign transactions
    carry exactly one.
    """
    out = {}
    for rtx in resolve_all(index):
        for payload in rtx.op_return_payloads:
            callout = match_callout(decode_payload_text(payload), registry)
            if callout is not None:
                out[bytes(rtx.txid)] = callout
                break
    return out


def _assign(labels, conflicts, address, entity, source, time, tid):
    existing = labels.get(address)
    if existing is None:
        labels[address] = EntityLabel(entity, source, time)
    elif existing.entity != entity:
        conflicts.append(LabelConflict(address, existing.entity, entity, tid, time))


def propagate_labels(
    index: LedgerIndex,
    registry: MessageRegistry,
    seed_labels: Optional[dict] = None,
    callouts: Optional[dict] = None,
) -> tuple[dict, list]:
    """Derive address labels from callout transactions.

    Inputs take the sender entity; outputs take the receiver entity, except
    change outputs (address also among the inputs), which keep the sender.
    First assignment wins; disagreements are recorded, never overwritten.
    """
    labels = dict(seed_labels) if seed_labels else {}
    conflicts: list = []
    if callouts is None:
        callouts = find_callouts(index, registry)
    for rtx in resolve_all(index):
        callout = callouts.get(bytes(rtx.txid))
        if callout is None:
            continue
        input_addresses = set(rtx.input_addresses)
        for address in rtx.input_addresses:
            _assign(labels, conflicts, address, callout.sender, "callout", rtx.time, rtx.txid)
        for address, value, kind, payload in rtx.outputs:
            if address is None:
                continue
            entity = callout.sender if address in input_addresses else callout.receiver
            _assign(labels, conflicts, address, entity, "callout", rtx.time, rtx.txid)
    return labels, conflicts


@dataclass(frozen=True)
class ClusterSet:
    of_address: dict  # address -> cluster id (the cluster's minimum address)
    members: dict     # cluster id -> tuple of member addresses, sorted

    def __len__(self) -> int:
        return len(self.members)


def cluster_address_groups(groups: Iterable, seed_addresses: Iterable = ()) -> ClusterSet:
    """Partition addresses by transitive group overlap.

    Each group is one transaction's input address set. The resulting
    partition is independent of group order and of address order within
    groups; each cluster is identified by its lexicographically smallest
    member.
    """
    normalized = []
    universe = set(seed_addresses)
    for group in groups:
        addresses = sorted(set(group))
        if not addresses:
            continue
        universe.update(addresses)
        if len(addresses) > 1:
            normalized.append(addresses)
    ordered = sorted(universe)
    ids = {address: i for i, address in enumerate(ordered)}
    flat = np.fromiter(
        (ids[a] for group in normalized for a in group),
        dtype=np.int64,
        count=sum(len(g) for g in normalized),
    )
    offsets = np.zeros(len(normalized) + 1, dtype=np.int64)
    np.cumsum([len(g) for g in normalized], out=offsets[1:])
    roots = union_groups(len(ordered), flat, offsets)
    of_address = {}
    members: dict = {}
    for i, address in enumerate(ordered):
        root_address = ordered[roots[i]]
        of_address[address] = root_address
        members.setdefault(root_address, []).append(address)
    return ClusterSet(of_address, {k: tuple(sorted(v)) for k, v in members.items()})


def cospend_clusters(
    index: LedgerIndex,
    exclude_txids: Iterable = (),
    seed_addresses: Iterable = (),
) -> ClusterSet:
    """Merge input addresses of each transaction, transitively.

    Coinbase transactions never cluster. Transactions in exclude_txids are
    skipped (used to drop callout transactions, whose spender is the
    campaign actor rather than the wallet owner). seed_addresses appear in
    the partition even if they never co-spend, as singletons.
    """
    excluded = {bytes(LedgerIndex._coerce(t)) for t in exclude_txids}
    groups = (
        rtx.input_addresses
        for rtx in resolve_all(index)
        if not rtx.is_coinbase and bytes(rtx.txid) not in excluded
    )
    return cluster_address_groups(groups, seed_addresses)


def brute_force_clusters(groups: Iterable[Iterable[str]], seed_addresses: Iterable = ()) -> dict:
    """Oracle: repeated pairwise merging until fixpoint. O(n^2), tests only."""
    clusters = [set(g) for g in groups if g]
    clusters.extend({a} for a in seed_addresses)
    changed = True
    while changed:
        changed = False
        for i in range(len(clusters)):
            if not clusters[i]:
                continue
            for j in range(i + 1, len(clusters)):
                if clusters[j] and clusters[i] & clusters[j]:
                    clusters[i] |= clusters[j]
                    clusters[j] = set()
                    changed = True
    return {min(c): tuple(sorted(c)) for c in clusters if c}


@dataclass(frozen=True)
class ClusterStatsRow:
    entity: str
    address_count: int
    cluster_count: int
    mean_size: float
    std_size: float
    mean_tx_count: float
    std_tx_count: float


@dataclass(frozen=True)
class ClusterViolation:
    cluster_id: str
    entities: tuple


def _population_stats(values: list) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def cluster_stats(
    clusters: ClusterSet, labels: dict, index: LedgerIndex
) -> tuple[dict, list]:
    """Per-entity cluster statistics plus cross-entity violations.

    Means and standard deviations are population (N-denominator) statistics
    over cluster sizes and per-cluster distinct transaction counts.
    """
    tx_count_cache: dict = {}

    def cluster_tx_count(cluster_id: str) -> int:
        cached = tx_count_cache.get(cluster_id)
        if cached is None:
            tids = set()
            for address in clusters.members[cluster_id]:
                for entry in index._address_map.get(address, ()):
                    tids.add(entry[3])
            cached = tx_count_cache[cluster_id] = len(tids)
        return cached

    entity_clusters: dict = {}
    violations = []
    for cluster_id, member_addresses in sorted(clusters.members.items()):
        present = sorted({labels[a].entity for a in member_addresses if a in labels})
        if len(present) > 1:
            violations.append(ClusterViolation(cluster_id, tuple(present)))
        for entity in present:
            entity_clusters.setdefault(entity, []).append(cluster_id)

    label_counts: dict = {}
    for label in labels.values():
        label_counts[label.entity] = label_counts.get(label.entity, 0) + 1

    stats = {}
    for entity in sorted(entity_clusters):
        ids = entity_clusters[entity]
        sizes = [len(clusters.members[c]) for c in ids]
        tx_counts = [cluster_tx_count(c) for c in ids]
        mean_size, std_size = _population_stats(sizes)
        mean_tx, std_tx = _population_stats(tx_counts)
        stats[entity] = ClusterStatsRow(
            entity, label_counts.get(entity, 0), len(ids),
            mean_size, std_size, mean_tx, std_tx,
        )
    return stats, violations


def extend_labels_by_cluster(labels: dict, clusters: ClusterSet) -> tuple[dict, int]:
    """Label unlabeled cluster members when the cluster is single-entity."""
    extended = dict(labels)
    added = 0
    for cluster_id, member_addresses in sorted(clusters.members.items()):
        labeled = [(a, labels[a]) for a in member_addresses if a in labels]
        entities = {lab.entity for _, lab in labeled}
        if len(entities) != 1:
            continue
        entity = entities.pop()
        first_seen = min(lab.first_seen for _, lab in labeled)
        for address in member_addresses:
            if address not in extended:
                extended[address] = EntityLabel(entity, "cluster-propagated", first_seen)
                added += 1
    return extended, added


def load_labels(path: str) -> dict:
    """Read a label CSV (address,label,source) into {address: EntityLabel}."""
    labels: dict = {}
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0] != ["address", "label", "source"]:
        raise BadLabel(f"{path}: expected header address,label,source")
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise BadLabel(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        address, entity, source = row
        parse_address(address)
        if entity not in ENTITIES:
            raise BadLabel(f"{path}:{lineno}: unknown label {entity!r}")
        existing = labels.get(address)
        if existing is not None and existing.entity != entity:
            raise BadLabel(f"{path}:{lineno}: {address} already labeled {existing.entity}")
        labels.setdefault(address, EntityLabel(entity, source, 0))
    return labels


def export_labels(labels: dict, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("#schema_version=1\n")
        writer = csv.writer(fh)
        writer.writerow(["address", "label", "source"])
        for address in sorted(labels):
            label = labels[address]
            writer.writerow([address, label.entity, label.source])


def export_clusters_csv(clusters: ClusterSet, labels: dict, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("#schema_version=1\n")
        writer = csv.writer(fh)
        writer.writerow(["cluster_id", "address", "entity"])
        for cluster_id in sorted(clusters.members):
            for address in clusters.members[cluster_id]:
                entity = labels[address].entity if address in labels else ""
                writer.writerow([cluster_id, address, entity])
