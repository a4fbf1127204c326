"""Linkage, ledger-growth and equivocation analyses over observer transcripts."""

from __future__ import annotations

import csv
import io
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from tokenlab import crypto, utxo, uso
from tokenlab.crypto import BlindSignatureTranscript
from tokenlab.dlt import EntryKind, LedgerEntry, Network
from tokenlab.errors import Rejected, Rejection

# --- observer transcripts --------------------------------------------------


@dataclass(frozen=True)
class TxObservation:
    """One transaction as a ledger observer sees it.

    ``inputs`` and ``outputs`` hold token identifiers: encoded output
    references, spent serials or asset ids.  Outputs are empty whenever the
    system hides what a transaction created.
    """

    event_id: bytes
    kind: str  # "issue", "create" or "spend"
    inputs: Tuple[bytes, ...] = ()
    outputs: Tuple[bytes, ...] = ()


@dataclass(frozen=True)
class IssuanceObservation:
    """What the issuer saw and learned during one issuance."""

    visible: bytes
    token_ids: Tuple[bytes, ...] = ()


@dataclass(frozen=True)
class LedgerTranscript:
    mode: str
    transactions: Tuple[TxObservation, ...] = ()


@dataclass(frozen=True)
class IssuanceTranscript:
    mode: str
    records: Tuple[IssuanceObservation, ...] = ()


def _ref_id(tx_id_hex: str, index: int) -> bytes:
    return bytes.fromhex(tx_id_hex) + int(index).to_bytes(4, "big")


def utxo_ledger_transcript(mode: str, entries: Iterable[LedgerEntry]) -> LedgerTranscript:
    txs = []
    for entry in entries:
        if entry.kind is not EntryKind.UTXO_TRANSACTION:
            continue
        p = entry.payload
        eid = entry.digest
        if p["type"] == "mint":
            outs = tuple(_ref_id(p["tx_id"], i) for i in range(len(p["outputs"])))
            txs.append(TxObservation(eid, "issue", (), outs))
        elif p["type"] == "spend":
            ins = tuple(_ref_id(t, i) for t, i in p["inputs"])
            outs = tuple(_ref_id(p["tx_id"], i) for i in range(len(p["outputs"])))
            txs.append(TxObservation(eid, "spend", ins, outs))
        elif p["type"] == "issue_private":
            txs.append(TxObservation(eid, "issue"))
        elif p["type"] == "spend_private":
            txs.append(TxObservation(eid, "spend", (bytes.fromhex(p["serial"]),)))
    return LedgerTranscript(mode, tuple(txs))


def utxo_mint_transcript(mode: str, entries: Iterable[LedgerEntry]) -> IssuanceTranscript:
    """Issuer view in transparent mode: the authority sees every mint it signs."""
    records = []
    for entry in entries:
        p = entry.payload
        if entry.kind is EntryKind.UTXO_TRANSACTION and p["type"] == "mint":
            outs = tuple(_ref_id(p["tx_id"], i) for i in range(len(p["outputs"])))
            records.append(IssuanceObservation(bytes.fromhex(p["tx_id"]), outs))
    return IssuanceTranscript(mode, tuple(records))


def issuer_transcript(mode: str, transcript: Iterable) -> IssuanceTranscript:
    """Normalise an issuer's records (blind or transparent) into observations."""
    records = []
    for t in transcript:
        if isinstance(t, BlindSignatureTranscript):
            records.append(IssuanceObservation(t.blinded_message + t.blind_signature + t.issuer_key))
        else:
            records.append(IssuanceObservation(t.body + t.signature, (t.asset_id,)))
    return IssuanceTranscript(mode, tuple(records))


def operator_stream_transcript(mode: str, received: Iterable[bytes]) -> LedgerTranscript:
    """Operator view: the first sighting of an asset id is its creation, later ones are spends."""
    seen = set()
    txs = []
    for chunk in received:
        asset_id, record = chunk[:32], chunk[32:]
        if asset_id in seen:
            txs.append(TxObservation(record, "spend", (asset_id,), (asset_id,)))
        else:
            seen.add(asset_id)
            txs.append(TxObservation(record, "create", (), (asset_id,)))
    return LedgerTranscript(mode, tuple(txs))


# --- linkage ---------------------------------------------------------------


@dataclass(frozen=True)
class LinkageReport:
    mode: str
    pairs_total: int
    pairs_linked: int
    method: str  # "serial-equality" or "graph-path"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "pairs_total": self.pairs_total,
            "pairs_linked": self.pairs_linked,
            "method": self.method,
        }


def linkage_analysis(ledger: LedgerTranscript, issuance: IssuanceTranscript) -> LinkageReport:
    """Count spent tokens that an observer can tie to their issuance.

    A spent token is linked when it, or a token reachable backwards through
    the visible transaction graph, equals an identifier the issuer learned
    or occurs verbatim in bytes the issuer saw.
    """
    if ledger.mode != issuance.mode:
        raise Rejected(Rejection.INVALID, f"transcripts from {ledger.mode!r} and {issuance.mode!r}")
    issued = {t for rec in issuance.records for t in rec.token_ids}
    visible = [rec.visible for rec in issuance.records]
    creator: Dict[bytes, TxObservation] = {}
    for tx in ledger.transactions:
        for out in tx.outputs:
            # a spend that re-emits its own input does not hide its origin
            creator.setdefault(out, tx)

    def origin_known(token: bytes) -> bool:
        return token in issued or any(token in v for v in visible)

    def linked(token: bytes) -> bool:
        queue, seen = deque([token]), {token}
        while queue:
            t = queue.popleft()
            if origin_known(t):
                return True
            tx = creator.get(t)
            if tx is None:
                continue
            for parent in tx.inputs:
                if parent not in seen:
                    seen.add(parent)
                    queue.append(parent)
        return False

    total = linked_count = 0
    for tx in ledger.transactions:
        if tx.kind != "spend":
            continue
        for token in tx.inputs:
            total += 1
            linked_count += linked(token)
    has_graph = any(tx.kind == "spend" and tx.outputs for tx in ledger.transactions)
    return LinkageReport(ledger.mode, total, linked_count, "graph-path" if has_graph else "serial-equality")


# --- growth ----------------------------------------------------------------


@dataclass
class GrowthReport:
    series: Dict[str, List[Tuple[int, int]]] = field(default_factory=dict)

    def slope(self, mode: str) -> Optional[float]:
        pts = sorted(self.series[mode])
        if len(pts) < 2:
            return None
        (x0, y0), (x1, y1) = pts[0], pts[-1]
        return (y1 - y0) / (x1 - x0)

    def to_json(self) -> dict:
        return {mode: [[n, e] for n, e in pts] for mode, pts in sorted(self.series.items())}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "transactions", "ledger_entries"])
        for mode, pts in sorted(self.series.items()):
            for n, e in pts:
                w.writerow([mode, n, e])
        return buf.getvalue()


def _uso_growth(n: int, epochs: int, seed: int) -> int:
    rng = random.Random(seed)
    network = Network.centralised(rng)
    operator = uso.Operator("op", crypto.generate_keypair(rng), network=network)
    issuer = uso.UsoIssuer(crypto.generate_keypair(rng))
    owner = crypto.generate_keypair(rng)
    for _ in range(n):
        uso.issue_asset(operator, issuer, 1, owner.public, uso.Privacy.TRANSPARENT, rng)
    for _ in range(epochs):
        operator.close_epoch()
    return len(network.entries)


def _utxo_growth(n: int, seed: int) -> int:
    rng = random.Random(seed)
    network = Network.centralised(rng)
    authority = crypto.generate_keypair(rng)
    ledger = utxo.UtxoLedger(network, authority.public)
    holders = [crypto.generate_keypair(rng) for _ in range(2)]
    tx = ledger.mint(authority, [(1, holders[0].public)])
    ref = utxo.OutputRef(tx.tx_id, 0)
    for i in range(n):
        sender, receiver = holders[i % 2], holders[(i + 1) % 2]
        spend = utxo.make_spend([ref], [sender.secret], [(1, receiver.public)])
        ledger.spend(spend)
        ref = utxo.OutputRef(spend.tx_id, 0)
    return len(network.entries)


def growth_analysis(
    transaction_counts: Sequence[int] = (10, 100, 1000), epochs: int = 1, seed: int = 0
) -> GrowthReport:
    """Ledger entries against transaction count with the epoch count held fixed.

    USO transactions all land in the first epoch; the UTXO control mints one
    token and moves it ``n`` times.
    """
    report = GrowthReport()
    report.series["uso"] = [(n, _uso_growth(n, epochs, seed)) for n in transaction_counts]
    report.series["utxo"] = [(n, _utxo_growth(n, seed)) for n in transaction_counts]
    return report


# --- equivocation ----------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    operator_id: str
    epoch: int
    certified_root: str
    conflicting_roots: Tuple[str, ...]
    reason: str

    def to_json(self) -> dict:
        return {
            "operator_id": self.operator_id,
            "epoch": self.epoch,
            "certified_root": self.certified_root,
            "conflicting_roots": list(self.conflicting_roots),
            "reason": self.reason,
        }


@dataclass(frozen=True)
class EquivocationAudit:
    status: str  # CLEAN, FINDINGS or UNDETECTABLE
    findings: Tuple[Finding, ...] = ()
    components_checked: int = 0
    components_unanchored: int = 0

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "findings": [f.to_json() for f in self.findings],
            "components_checked": self.components_checked,
            "components_unanchored": self.components_unanchored,
        }


def equivocation_audit(entries: Iterable[LedgerEntry], proofs: Iterable) -> EquivocationAudit:
    """Cross-check every collected proof component against certified roots.

    ``proofs`` are ``ProofOfProvenance`` values.  Components whose
    (operator, epoch) has no certified commitment cannot be judged; if none
    can, the result is UNDETECTABLE.
    """
    certified: Dict[Tuple[str, int], Mapping] = {}
    for entry in entries:
        if entry.kind is EntryKind.EPOCH_COMMITMENT:
            certified[(entry.payload["operator_id"], entry.payload["epoch"])] = entry.payload
    roots: Dict[Tuple[str, int], set] = {}
    checked = unanchored = 0
    for proof in proofs:
        for comp in proof.components:
            c = comp.commitment
            key = (c.operator_id, c.epoch)
            anchor = certified.get(key)
            if anchor is None:
                unanchored += 1
                continue
            checked += 1
            operator_key = bytes.fromhex(anchor["operator_key"])
            # only roots the operator really signed count against it
            if crypto.verify(operator_key, c.message, c.operator_signature):
                roots.setdefault(key, set()).add(c.root.hex())
    findings = []
    for key in sorted(roots):
        certified_root = certified[key]["root"]
        others = tuple(sorted(roots[key] - {certified_root}))
        if others:
            findings.append(
                Finding(
                    key[0],
                    key[1],
                    certified_root,
                    others,
                    "operator signed a root that differs from its certified commitment",
                )
            )
    if findings:
        status = "FINDINGS"
    elif checked == 0 and unanchored > 0:
        status = "UNDETECTABLE"
    else:
        status = "CLEAN"
    return EquivocationAudit(status, tuple(findings), checked, unanchored)
