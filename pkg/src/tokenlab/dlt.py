"""Simulated distributed ledger with quorum certificates.

A fixed set of peers signs each proposed entry; an entry is certified once
it carries signatures from ``ceil(2N/3)`` distinct peers.  Consensus is a
synchronous collect-signatures round, not a real BFT protocol.  A network of
one peer with threshold one stands in for a centralised ledger.

The module also carries the three account-based uses of a ledger: evidence
of transfers between externally managed accounts, interledger transfer
records, and balance transfers between internally managed accounts.
"""

from __future__ import annotations

import enum
import json
import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from tokenlab import crypto
from tokenlab.crypto import KeyPair
from tokenlab.encoding import canonical_json, read_jsonl, write_jsonl
from tokenlab.errors import Rejected, Rejection

log = logging.getLogger(__name__)


class EntryKind(str, enum.Enum):
    EXTERNAL_EVIDENCE = "EXTERNAL_EVIDENCE"
    INTERLEDGER_TRANSFER = "INTERLEDGER_TRANSFER"
    BALANCE_TRANSFER = "BALANCE_TRANSFER"
    UTXO_TRANSACTION = "UTXO_TRANSACTION"
    EPOCH_COMMITMENT = "EPOCH_COMMITMENT"


class PeerBehaviour(str, enum.Enum):
    HONEST = "honest"
    SILENT = "silent"
    EQUIVOCATING = "equivocating"


def quorum_threshold(n_peers: int) -> int:
    return -(-2 * n_peers // 3)


def max_faulty(n_peers: int) -> int:
    return (n_peers - 1) // 3


def entry_digest(index: int, kind: EntryKind, payload: Mapping[str, Any]) -> bytes:
    return crypto.tagged_digest("tokenlab/entry", index, EntryKind(kind).value, canonical_json(payload))


@dataclass(frozen=True)
class LedgerEntry:
    index: int
    kind: EntryKind
    payload: Dict[str, Any]
    quorum_cert: Tuple[Tuple[int, bytes], ...]

    @property
    def digest(self) -> bytes:
        return entry_digest(self.index, self.kind, self.payload)

    def to_json(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "kind": self.kind.value,
            "payload": self.payload,
            "quorum_cert": [[pid, sig.hex()] for pid, sig in self.quorum_cert],
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LedgerEntry":
        return cls(
            index=int(obj["index"]),
            kind=EntryKind(obj["kind"]),
            payload=dict(obj["payload"]),
            quorum_cert=tuple((int(pid), bytes.fromhex(sig)) for pid, sig in obj["quorum_cert"]),
        )


@dataclass
class Peer:
    peer_id: int
    keypair: KeyPair
    behaviour: PeerBehaviour = PeerBehaviour.HONEST
    local_log: List[LedgerEntry] = field(default_factory=list)
    _votes: Dict[int, bytes] = field(default_factory=dict, repr=False)

    def vote(self, index: int, message: bytes) -> Optional[bytes]:
        """Sign ``message`` for slot ``index`` if this peer's behaviour allows."""
        if self.behaviour is PeerBehaviour.SILENT:
            return None
        if self.behaviour is PeerBehaviour.HONEST:
            prior = self._votes.get(index)
            if prior is not None and prior != message:
                return None
            self._votes[index] = message
        return crypto.sign(self.keypair.secret, message)


# --- payload validation ----------------------------------------------------


def _is_hex_digest(value: Any) -> bool:
    if not isinstance(value, str) or len(value) != 2 * crypto.DIGEST_SIZE:
        return False
    try:
        bytes.fromhex(value)
    except ValueError:
        return False
    return True


def _is_amount(value: Any, minimum: int = 1) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= minimum


def _check_payload(kind: EntryKind, payload: Mapping[str, Any]) -> Optional[str]:
    if kind is EntryKind.EXTERNAL_EVIDENCE:
        fids = payload.get("fiduciaries")
        if set(payload) != {"fiduciaries", "tx_digest"}:
            return "evidence payload carries exactly fiduciaries and tx_digest"
        if not (isinstance(fids, list) and len(fids) == 2 and all(isinstance(f, str) for f in fids)):
            return "evidence needs two fiduciary ids"
        if not _is_hex_digest(payload["tx_digest"]):
            return "tx_digest must be a 32-byte hex digest"
    elif kind is EntryKind.INTERLEDGER_TRANSFER:
        if set(payload) != {"from", "to", "amount"}:
            return "interledger payload carries exactly from, to, amount"
        if not (isinstance(payload["from"], str) and isinstance(payload["to"], str)):
            return "account ids must be strings"
        if not _is_amount(payload["amount"]):
            return "amount must be a positive integer"
    elif kind is EntryKind.BALANCE_TRANSFER:
        op = payload.get("op")
        if op == "issue":
            if set(payload) != {"op", "to", "amount"} or not _is_amount(payload["amount"], 0):
                return "issue needs to and a non-negative amount"
        elif op == "transfer":
            if set(payload) != {"op", "from", "to", "amount"} or not _is_amount(payload["amount"]):
                return "transfer needs from, to and a positive amount"
        else:
            return "balance op must be issue or transfer"
    elif kind is EntryKind.UTXO_TRANSACTION:
        if not isinstance(payload.get("type"), str):
            return "utxo payload needs a type"
    elif kind is EntryKind.EPOCH_COMMITMENT:
        if set(payload) != {"operator_id", "epoch", "root", "size", "operator_key", "signature"}:
            return "commitment payload fields"
        if not isinstance(payload["operator_id"], str) or not _is_amount(payload["epoch"], 0):
            return "commitment needs operator_id and epoch"
        if not _is_hex_digest(payload["root"]):
            return "root must be a 32-byte hex digest"
        if not _is_amount(payload["size"], 0):
            return "size must be a non-negative leaf count"
    return None


# --- network ---------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    clean: bool
    index: Optional[int] = None
    peer_id: Optional[int] = None
    reason: str = ""

    def __str__(self) -> str:
        if self.clean:
            return "CLEAN"
        who = f" peer {self.peer_id}" if self.peer_id is not None else ""
        return f"VIOLATION at entry {self.index}{who}: {self.reason}"


class Network:
    """A ledger network advanced by one caller at a time."""

    def __init__(
        self,
        n_peers: int,
        rng: random.Random,
        faults: Optional[Mapping[int, Union[PeerBehaviour, str]]] = None,
    ):
        if n_peers < 1:
            raise ValueError("a network needs at least one peer")
        faults = dict(faults or {})
        unknown = set(faults) - set(range(n_peers))
        if unknown:
            raise ValueError(f"fault config names unknown peers {sorted(unknown)}")
        self.peers = [
            Peer(pid, crypto.generate_keypair(rng), PeerBehaviour(faults.get(pid, PeerBehaviour.HONEST)))
            for pid in range(n_peers)
        ]
        self.threshold = quorum_threshold(n_peers)
        self.entries: List[LedgerEntry] = []
        self.parties: set = set()
        self.reads = 0
        self.fork_votes: List[Tuple[int, int, bytes]] = []
        self._commitments: Dict[Tuple[str, int], int] = {}

    @classmethod
    def centralised(cls, rng: random.Random) -> "Network":
        return cls(1, rng)

    @property
    def size(self) -> int:
        return len(self.peers)

    @property
    def peer_keys(self) -> Dict[int, bytes]:
        return {p.peer_id: p.keypair.public for p in self.peers}

    def register_party(self, *party_ids: str) -> None:
        for pid in party_ids:
            if not isinstance(pid, str) or not pid:
                raise ValueError("party ids are non-empty strings")
            self.parties.add(pid)

    def entry(self, index: int) -> LedgerEntry:
        """Read one certified entry; counted in ``reads``."""
        self.reads += 1
        return self.entries[index]

    def commitment_index(self, operator_id: str, epoch: int) -> Optional[int]:
        return self._commitments.get((operator_id, epoch))

    def _validate(self, kind: EntryKind, payload: Any) -> Dict[str, Any]:
        if not isinstance(payload, Mapping):
            raise Rejected(Rejection.INVALID, "payload must be a mapping")
        try:
            normalised = json.loads(canonical_json(payload))
        except (TypeError, ValueError) as exc:
            raise Rejected(Rejection.INVALID, f"payload not serialisable: {exc}") from None
        problem = _check_payload(kind, normalised)
        if problem:
            raise Rejected(Rejection.INVALID, problem)
        if kind is EntryKind.EPOCH_COMMITMENT:
            key = (normalised["operator_id"], normalised["epoch"])
            if key in self._commitments:
                raise Rejected(
                    Rejection.DUPLICATE_EPOCH,
                    f"operator {key[0]} already committed epoch {key[1]}",
                )
        return normalised

    def submit_entry(self, kind: Union[EntryKind, str], payload: Mapping[str, Any]) -> LedgerEntry:
        try:
            kind = EntryKind(kind)
        except ValueError:
            raise Rejected(Rejection.INVALID, f"unknown entry kind {kind!r}") from None
        payload = self._validate(kind, payload)
        index = len(self.entries)
        message = entry_digest(index, kind, payload)
        cert = []
        for peer in self.peers:
            if peer.behaviour is PeerBehaviour.EQUIVOCATING:
                # votes for a conflicting history instead of this proposal
                fork = crypto.tagged_digest("tokenlab/fork", message)
                sig = peer.vote(index, fork)
                if sig is not None:
                    self.fork_votes.append((index, peer.peer_id, fork))
                continue
            sig = peer.vote(index, message)
            if sig is not None:
                cert.append((peer.peer_id, sig))
        if len(cert) < self.threshold:
            raise Rejected(
                Rejection.NO_QUORUM,
                f"{len(cert)} of {self.size} peers signed, {self.threshold} needed",
            )
        entry = LedgerEntry(index, kind, payload, tuple(cert))
        self._append(entry)
        return entry

    def _append(self, entry: LedgerEntry) -> None:
        self.entries.append(entry)
        for peer in self.peers:
            if peer.behaviour is PeerBehaviour.HONEST:
                peer.local_log.append(entry)
        if entry.kind is EntryKind.EPOCH_COMMITMENT:
            self._commitments[(entry.payload["operator_id"], entry.payload["epoch"])] = entry.index
        log.debug("certified entry %d (%s)", entry.index, entry.kind.value)

    def contest(
        self,
        candidates: Sequence[Tuple[Union[EntryKind, str], Mapping[str, Any]]],
        delivery: Mapping[int, Sequence[int]],
    ) -> List[LedgerEntry]:
        """Run one slot where a faulty proposer sends conflicting candidates.

        ``delivery[peer_id]`` is the order in which that peer sees the
        candidates.  Every candidate that gathers a quorum is returned; the
        log is extended only when exactly one does.
        """
        index = len(self.entries)
        prepared = []
        for kind, payload in candidates:
            kind = EntryKind(kind)
            payload = self._validate(kind, payload)
            prepared.append((kind, payload, entry_digest(index, kind, payload)))
        certs: List[List[Tuple[int, bytes]]] = [[] for _ in prepared]
        for peer in self.peers:
            for ci in delivery.get(peer.peer_id, range(len(prepared))):
                sig = peer.vote(index, prepared[ci][2])
                if sig is not None:
                    certs[ci].append((peer.peer_id, sig))
        certified = [
            LedgerEntry(index, kind, payload, tuple(sorted(cert)))
            for (kind, payload, _), cert in zip(prepared, certs)
            if len(cert) >= self.threshold
        ]
        if len(certified) == 1:
            self._append(certified[0])
        return certified

    def audit(self) -> AuditReport:
        return audit_entries(self.entries, self.peer_keys, self.threshold)

    def export_log(self, path: Union[str, Path]) -> None:
        export_log(path, self.entries, self.peer_keys, self.threshold)


def audit_entries(
    entries: Sequence[LedgerEntry], peer_keys: Mapping[int, bytes], threshold: int
) -> AuditReport:
    """Check index contiguity and every quorum certificate; stop at the first problem."""
    for position, entry in enumerate(entries):
        if entry.index != position:
            return AuditReport(False, position, None, f"index gap: expected {position}, found {entry.index}")
        message = entry.digest
        seen = set()
        for peer_id, sig in entry.quorum_cert:
            if peer_id not in peer_keys:
                return AuditReport(False, entry.index, peer_id, "signature from unregistered peer")
            if peer_id in seen:
                return AuditReport(False, entry.index, peer_id, "duplicate signer")
            if not crypto.verify(peer_keys[peer_id], message, sig):
                return AuditReport(False, entry.index, peer_id, "bad signature")
            seen.add(peer_id)
        if len(seen) < threshold:
            return AuditReport(
                False, entry.index, None, f"quorum certificate has {len(seen)} signers, {threshold} needed"
            )
    return AuditReport(True)


def export_log(
    path: Union[str, Path],
    entries: Iterable[LedgerEntry],
    peer_keys: Mapping[int, bytes],
    threshold: int,
) -> None:
    header = {
        "network": {
            "threshold": threshold,
            "peers": [{"peer_id": pid, "public": key.hex()} for pid, key in sorted(peer_keys.items())],
        }
    }
    write_jsonl(path, [header, *(e.to_json() for e in entries)])


def import_log(path: Union[str, Path]) -> Tuple[List[LedgerEntry], Dict[int, bytes], int]:
    records = list(read_jsonl(path))
    if not records or "network" not in records[0]:
        raise ValueError(f"{path}: missing network header line")
    net = records[0]["network"]
    peer_keys = {int(p["peer_id"]): bytes.fromhex(p["public"]) for p in net["peers"]}
    return [LedgerEntry.from_json(r) for r in records[1:]], peer_keys, int(net["threshold"])


# --- account modes ---------------------------------------------------------


def record_external_evidence(
    network: Network, fiduciary_ids: Tuple[str, str], tx_digest: bytes
) -> LedgerEntry:
    a, b = fiduciary_ids
    for fid in (a, b):
        if fid not in network.parties:
            raise Rejected(Rejection.UNKNOWN_PARTY, f"fiduciary {fid!r} not registered")
    if len(tx_digest) != crypto.DIGEST_SIZE:
        raise Rejected(Rejection.INVALID, "tx digest must be 32 bytes")
    return network.submit_entry(
        EntryKind.EXTERNAL_EVIDENCE, {"fiduciaries": [a, b], "tx_digest": tx_digest.hex()}
    )


def record_interledger_transfer(network: Network, from_account: str, to_account: str, amount: int) -> LedgerEntry:
    # balances live with the external fiduciaries; nothing is checked here
    if not _is_amount(amount):
        raise Rejected(Rejection.INVALID, "amount must be a positive integer")
    return network.submit_entry(
        EntryKind.INTERLEDGER_TRANSFER, {"from": from_account, "to": to_account, "amount": amount}
    )


@dataclass(frozen=True)
class AccountState:
    balances: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.balances.values())

    def credited(self, account: str, amount: int) -> "AccountState":
        balances = dict(self.balances)
        balances[account] = balances.get(account, 0) + amount
        return replace(self, balances=balances)


def issue_balance(network: Network, state: AccountState, to: str, amount: int) -> Tuple[LedgerEntry, AccountState]:
    """Open ``to`` if needed and credit it with newly issued funds."""
    if not _is_amount(amount, 0):
        raise Rejected(Rejection.INVALID, "issued amount must be a non-negative integer")
    entry = network.submit_entry(EntryKind.BALANCE_TRANSFER, {"op": "issue", "to": to, "amount": amount})
    return entry, state.credited(to, amount)


def apply_balance_transfer(
    network: Network, state: AccountState, from_account: str, to_account: str, amount: int
) -> Tuple[LedgerEntry, AccountState]:
    if not _is_amount(amount):
        raise Rejected(Rejection.INVALID, "amount must be a positive integer")
    if from_account not in state.balances:
        raise Rejected(Rejection.UNKNOWN_PARTY, f"account {from_account!r} not open")
    if state.balances[from_account] < amount:
        raise Rejected(
            Rejection.INSUFFICIENT_FUNDS,
            f"{from_account} holds {state.balances[from_account]}, needs {amount}",
        )
    if to_account not in state.balances:
        raise Rejected(Rejection.UNKNOWN_PARTY, f"account {to_account!r} not open")
    entry = network.submit_entry(
        EntryKind.BALANCE_TRANSFER,
        {"op": "transfer", "from": from_account, "to": to_account, "amount": amount},
    )
    balances = dict(state.balances)
    balances[from_account] -= amount
    balances[to_account] += amount
    return entry, AccountState(balances)


def replay_balances(entries: Iterable[LedgerEntry]) -> AccountState:
    balances: Dict[str, int] = {}
    for entry in entries:
        if entry.kind is not EntryKind.BALANCE_TRANSFER:
            continue
        p = entry.payload
        if p["op"] == "issue":
            balances[p["to"]] = balances.get(p["to"], 0) + p["amount"]
        else:
            balances[p["from"]] -= p["amount"]
            balances[p["to"]] += p["amount"]
    return AccountState(balances)
