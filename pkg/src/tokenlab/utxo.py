"""Endogenous token tracking: the ledger holds the state of every token.

Transparent mode tracks outputs by ``(tx_id, output_index)`` and lets any
ledger observer follow a token back to its mint.  Private mode is the
centralised Chaumian design: fixed denominations, serials blind-signed by the
issuer, and a ledger that sees only denominations, issuance counts and the
serials of spent tokens.
"""

from __future__ import annotations

import enum
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from tokenlab import crypto
from tokenlab.crypto import BlindingState, BlindSignatureTranscript, KeyPair
from tokenlab.dlt import EntryKind, LedgerEntry, Network
from tokenlab.encoding import encode_fields
from tokenlab.errors import Rejected, Rejection

DEFAULT_DENOMINATIONS = (1, 5, 10, 50)
SERIAL_SIZE = 32


class Mode(str, enum.Enum):
    TRANSPARENT = "transparent"
    PRIVATE = "private"


@dataclass(frozen=True, order=True)
class OutputRef:
    tx_id: bytes
    index: int

    def __str__(self) -> str:
        return f"{self.tx_id.hex()}:{self.index}"

    def to_json(self) -> list:
        return [self.tx_id.hex(), self.index]

    @classmethod
    def from_json(cls, obj: Sequence) -> "OutputRef":
        return cls(bytes.fromhex(obj[0]), int(obj[1]))


@dataclass(frozen=True)
class Token:
    ref: OutputRef
    value: int
    owner: bytes


@dataclass(frozen=True)
class PrivateToken:
    serial: bytes
    value: int
    issuer_signature: bytes

    @property
    def message(self) -> bytes:
        return denomination_message(self.value, self.serial)


def denomination_message(value: int, serial: bytes) -> bytes:
    return encode_fields("tokenlab/denomination", value, serial)


@dataclass(frozen=True)
class UtxoTransaction:
    kind: str  # "mint" or "spend"
    inputs: Tuple[OutputRef, ...]
    outputs: Tuple[Tuple[int, bytes], ...]
    nonce: bytes = b""
    witness: Tuple[bytes, ...] = ()

    @cached_property
    def tx_id(self) -> bytes:
        fields: list = [self.kind, len(self.inputs)]
        for ref in self.inputs:
            fields += [ref.tx_id, ref.index]
        fields.append(len(self.outputs))
        for value, owner in self.outputs:
            fields += [value, owner]
        fields.append(self.nonce)
        return crypto.digest(encode_fields("tokenlab/utxo-tx", *fields))

    def signed(self, secrets: Sequence[bytes]) -> "UtxoTransaction":
        witness = tuple(crypto.sign(s, self.tx_id) for s in secrets)
        return UtxoTransaction(self.kind, self.inputs, self.outputs, self.nonce, witness)

    def to_json(self) -> dict:
        return {
            "type": self.kind,
            "tx_id": self.tx_id.hex(),
            "inputs": [r.to_json() for r in self.inputs],
            "outputs": [[v, o.hex()] for v, o in self.outputs],
            "nonce": self.nonce.hex(),
            "witness": [w.hex() for w in self.witness],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "UtxoTransaction":
        tx = cls(
            kind=obj["type"],
            inputs=tuple(OutputRef.from_json(r) for r in obj["inputs"]),
            outputs=tuple((int(v), bytes.fromhex(o)) for v, o in obj["outputs"]),
            nonce=bytes.fromhex(obj.get("nonce", "")),
            witness=tuple(bytes.fromhex(w) for w in obj.get("witness", [])),
        )
        if "tx_id" in obj and tx.tx_id.hex() != obj["tx_id"]:
            raise ValueError("tx_id does not match canonical encoding")
        return tx


def make_spend(
    inputs: Sequence[OutputRef], secrets: Sequence[bytes], outputs: Sequence[Tuple[int, bytes]]
) -> UtxoTransaction:
    """Build a spend and sign it with the secret key of each input's owner."""
    tx = UtxoTransaction("spend", tuple(inputs), tuple((int(v), bytes(o)) for v, o in outputs))
    return tx.signed(secrets)


# --- blind issuance --------------------------------------------------------


class BlindIssuer:
    """Issuer holding one blind-signing key per denomination.

    ``transcript`` is the issuer's complete view of every issuance.
    """

    def __init__(self, keys: Mapping[int, KeyPair]):
        self.keys = dict(keys)
        self.transcript: List[BlindSignatureTranscript] = []

    @classmethod
    def generate(
        cls, rng: random.Random, denominations: Iterable[int] = DEFAULT_DENOMINATIONS, bits: int = crypto.DEFAULT_RSA_BITS
    ) -> "BlindIssuer":
        return cls({d: crypto.generate_blind_keypair(rng, bits) for d in sorted(set(denominations))})

    @property
    def public_keys(self) -> Dict[int, bytes]:
        return {d: k.public for d, k in self.keys.items()}

    def sign_blinded(self, denomination: int, blinded_message: bytes) -> bytes:
        key = self.keys[denomination]
        blind_sig = crypto.blind_sign(key.secret, blinded_message)
        self.transcript.append(BlindSignatureTranscript(blinded_message, blind_sig, key.public))
        return blind_sig


@dataclass(frozen=True)
class SerialRequest:
    """User-side record of a blinded serial awaiting the issuer's signature."""

    value: int
    serial: bytes
    blinded_message: bytes
    state: BlindingState


def request_serial(issuer_keys: Mapping[int, bytes], value: int, rng: random.Random) -> SerialRequest:
    if value not in issuer_keys:
        raise Rejected(Rejection.BAD_DENOMINATION, f"no issuer key for denomination {value}")
    serial = rng.randbytes(SERIAL_SIZE)
    blinded, state = crypto.blind(denomination_message(value, serial), issuer_keys[value], rng)
    return SerialRequest(value, serial, blinded, state)


# --- ledger ----------------------------------------------------------------


@dataclass(frozen=True)
class UtxoState:
    live: Dict[OutputRef, Tuple[int, bytes]] = field(default_factory=dict)
    spent: FrozenSet[bytes] = frozenset()
    outstanding: Dict[int, int] = field(default_factory=dict)


def _spent_key(ref: OutputRef) -> bytes:
    return ref.tx_id + ref.index.to_bytes(4, "big")


class UtxoLedger:
    """A UTXO ledger backed by a (possibly single-peer) certified log."""

    def __init__(
        self,
        network: Network,
        authority_key: Optional[bytes] = None,
        *,
        mode: Mode = Mode.TRANSPARENT,
        issuer: Optional[BlindIssuer] = None,
        denominations: Iterable[int] = DEFAULT_DENOMINATIONS,
    ):
        self.network = network
        self.mode = Mode(mode)
        self.authority_key = authority_key
        self.denominations = tuple(sorted(set(denominations)))
        if self.mode is Mode.PRIVATE:
            if issuer is None:
                raise ValueError("private mode needs a blind issuer")
            if set(self.denominations) - set(issuer.keys):
                raise ValueError("issuer lacks a key for some denomination")
        elif authority_key is None:
            raise ValueError("transparent mode needs an authority key")
        self.issuer = issuer
        self.live: Dict[OutputRef, Token] = {}
        self.spent: set = set()
        self.outstanding: Counter = Counter()
        self.transactions: Dict[bytes, UtxoTransaction] = {}
        self.entry_of: Dict[bytes, int] = {}
        self.minted = 0
        self.mint_count = 0
        self.accepted_spends = 0

    # transparent mode

    def mint(self, authority_key: KeyPair, outputs: Sequence[Tuple[int, bytes]]) -> UtxoTransaction:
        if self.mode is not Mode.TRANSPARENT:
            raise Rejected(Rejection.INVALID, "private ledgers issue through issue_private")
        if authority_key.public != self.authority_key:
            raise Rejected(Rejection.UNAUTHORISED_ISSUE, "signer is not the issuing authority")
        outputs = tuple((v, bytes(o)) for v, o in outputs)
        self._check_outputs(outputs)
        tx = UtxoTransaction("mint", (), outputs, nonce=self.mint_count.to_bytes(8, "big"))
        tx = tx.signed([authority_key.secret])
        self._commit(tx)
        self.mint_count += 1
        self.minted += sum(v for v, _ in outputs)
        return tx

    def spend(self, tx: UtxoTransaction) -> LedgerEntry:
        if self.mode is not Mode.TRANSPARENT:
            raise Rejected(Rejection.INVALID, "private ledgers spend through spend_private")
        if tx.kind != "spend" or not tx.inputs:
            raise Rejected(Rejection.INVALID, "a spend needs at least one input")
        if len(set(tx.inputs)) != len(tx.inputs):
            raise Rejected(Rejection.DOUBLE_SPEND, "input repeated within one transaction")
        for ref in tx.inputs:
            if _spent_key(ref) in self.spent:
                raise Rejected(Rejection.DOUBLE_SPEND, f"{ref} already spent")
            if ref not in self.live:
                raise Rejected(Rejection.UNKNOWN_TOKEN, f"{ref} is not a known output")
        self._check_outputs(tx.outputs)
        in_value = sum(self.live[r].value for r in tx.inputs)
        out_value = sum(v for v, _ in tx.outputs)
        if in_value != out_value:
            raise Rejected(Rejection.VALUE_MISMATCH, f"inputs {in_value} != outputs {out_value}")
        if len(tx.witness) != len(tx.inputs) or not all(
            crypto.verify(self.live[r].owner, tx.tx_id, w) for r, w in zip(tx.inputs, tx.witness)
        ):
            raise Rejected(Rejection.BAD_SIGNATURE, "witness does not cover every input owner")
        entry = self._commit(tx)
        for ref in tx.inputs:
            del self.live[ref]
            self.spent.add(_spent_key(ref))
        self.accepted_spends += 1
        return entry

    def _check_outputs(self, outputs: Sequence[Tuple[int, bytes]]) -> None:
        if not outputs:
            raise Rejected(Rejection.INVALID, "no outputs")
        for value, owner in outputs:
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise Rejected(Rejection.INVALID, f"output value {value!r} must be positive")
            if len(owner) != crypto.ED25519_KEY_SIZE:
                raise Rejected(Rejection.INVALID, "owner must be a verification key")

    def _commit(self, tx: UtxoTransaction) -> LedgerEntry:
        entry = self.network.submit_entry(EntryKind.UTXO_TRANSACTION, tx.to_json())
        self.transactions[tx.tx_id] = tx
        self.entry_of[tx.tx_id] = entry.index
        for i, (value, owner) in enumerate(tx.outputs):
            ref = OutputRef(tx.tx_id, i)
            self.live[ref] = Token(ref, value, owner)
        return entry

    def trace(self, ref: OutputRef) -> List[UtxoTransaction]:
        """Transactions from the one that created ``ref`` back to its mint.

        At a merge the first input is followed.
        """
        if self.mode is Mode.PRIVATE:
            raise Rejected(Rejection.NOT_TRACEABLE, "private tokens carry no ledger history")
        tx = self.transactions.get(ref.tx_id)
        if tx is None or not 0 <= ref.index < len(tx.outputs):
            raise Rejected(Rejection.UNKNOWN_TOKEN, f"{ref} is not a known output")
        path = [tx]
        while tx.kind != "mint":
            tx = self.transactions[tx.inputs[0].tx_id]
            path.append(tx)
        return path

    # private mode

    def issue_private(self, authority: BlindIssuer, value: int, request: SerialRequest) -> PrivateToken:
        if self.mode is not Mode.PRIVATE:
            raise Rejected(Rejection.INVALID, "transparent ledgers issue through mint")
        if authority is not self.issuer:
            raise Rejected(Rejection.UNAUTHORISED_ISSUE, "not this ledger's issuer")
        if value not in self.denominations:
            raise Rejected(Rejection.BAD_DENOMINATION, f"{value} not in {list(self.denominations)}")
        self.network.submit_entry(
            EntryKind.UTXO_TRANSACTION, {"type": "issue_private", "denomination": value, "count": 1}
        )
        self.mint_count += 1
        self.minted += value
        self.outstanding[value] += 1
        return self._finish(request, authority.sign_blinded(value, request.blinded_message))

    def spend_private(self, token: PrivateToken, new_requests: Sequence[SerialRequest]) -> List[PrivateToken]:
        """Retire ``token`` and blind-issue replacements of the same total value."""
        if self.mode is not Mode.PRIVATE:
            raise Rejected(Rejection.INVALID, "transparent ledgers spend through spend")
        if token.value not in self.denominations:
            raise Rejected(Rejection.BAD_DENOMINATION, f"{token.value} not in {list(self.denominations)}")
        if not crypto.verify(self.issuer.keys[token.value].public, token.message, token.issuer_signature):
            raise Rejected(Rejection.BAD_SIGNATURE, "issuer signature does not verify")
        if token.serial in self.spent:
            raise Rejected(Rejection.DOUBLE_SPEND, f"serial {token.serial.hex()[:16]} already spent")
        for req in new_requests:
            if req.value not in self.denominations:
                raise Rejected(Rejection.BAD_DENOMINATION, f"{req.value} not in {list(self.denominations)}")
        if sum(r.value for r in new_requests) != token.value:
            raise Rejected(Rejection.VALUE_MISMATCH, "replacement value must equal the spent token")
        self.network.submit_entry(
            EntryKind.UTXO_TRANSACTION,
            {
                "type": "spend_private",
                "denomination": token.value,
                "serial": token.serial.hex(),
                "reissue": [r.value for r in new_requests],
            },
        )
        self.spent.add(token.serial)
        self.outstanding[token.value] -= 1
        self.accepted_spends += 1
        out = []
        for req in new_requests:
            self.outstanding[req.value] += 1
            out.append(self._finish(req, self.issuer.sign_blinded(req.value, req.blinded_message)))
        return out

    @staticmethod
    def _finish(request: SerialRequest, blind_sig: bytes) -> PrivateToken:
        return PrivateToken(request.serial, request.value, crypto.unblind(blind_sig, request.state))

    # queries

    @property
    def live_value(self) -> int:
        if self.mode is Mode.PRIVATE:
            return sum(d * n for d, n in self.outstanding.items())
        return sum(t.value for t in self.live.values())

    def snapshot(self) -> UtxoState:
        return UtxoState(
            live={ref: (t.value, t.owner) for ref, t in self.live.items()},
            spent=frozenset(self.spent),
            outstanding={d: n for d, n in self.outstanding.items() if n},
        )


def replay_utxo(entries: Iterable[LedgerEntry]) -> UtxoState:
    """Rebuild live outputs, spent identifiers and outstanding counts from a log."""
    live: Dict[OutputRef, Tuple[int, bytes]] = {}
    spent: set = set()
    outstanding: Counter = Counter()
    for entry in entries:
        if entry.kind is not EntryKind.UTXO_TRANSACTION:
            continue
        p = entry.payload
        kind = p["type"]
        if kind in ("mint", "spend"):
            tx_id = bytes.fromhex(p["tx_id"])
            for raw in p["inputs"]:
                ref = OutputRef.from_json(raw)
                live.pop(ref, None)
                spent.add(_spent_key(ref))
            for i, (value, owner) in enumerate(p["outputs"]):
                live[OutputRef(tx_id, i)] = (value, bytes.fromhex(owner))
        elif kind == "issue_private":
            outstanding[p["denomination"]] += p["count"]
        elif kind == "spend_private":
            spent.add(bytes.fromhex(p["serial"]))
            outstanding[p["denomination"]] -= 1
            for d in p["reissue"]:
                outstanding[d] += 1
    return UtxoState(live, frozenset(spent), {d: n for d, n in outstanding.items() if n})
