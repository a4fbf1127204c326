"""Oblivious token tracking with unforgeable, stateful, oblivious (USO) assets.

An asset carries its genesis record, its chain of owner-signed state
updates and a proof of provenance.  The operator only ever receives
``(asset_id, record digest)`` pairs; at the end of each epoch it builds a
key-sorted Merkle tree over them (one leaf per asset) and signs the root.
With DLT mitigation the signed root is certified on the ledger, so any
proof built against a different root for the same epoch is caught.
"""

from __future__ import annotations

import enum
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from tokenlab import crypto
from tokenlab.crypto import BlindSignatureTranscript, KeyPair
from tokenlab.dlt import EntryKind, LedgerEntry, Network
from tokenlab.encoding import encode_fields
from tokenlab.errors import Rejected, Rejection
from tokenlab.merkle import Absence, LeafProof, SortedMerkleTree, verify_absence

log = logging.getLogger(__name__)

NONCE_SIZE = 16
DEFAULT_DENOMINATIONS = (1, 5, 10, 50)


class Privacy(str, enum.Enum):
    TRANSPARENT = "transparent"
    BLIND = "blind"


class Mitigation(str, enum.Enum):
    DLT = "dlt"
    SELF_ATTESTED = "self-attested"


class Verdict(str, enum.Enum):
    VALID = "VALID"
    BAD_GENESIS = "BAD_GENESIS"
    BROKEN_CHAIN = "BROKEN_CHAIN"
    BAD_ENCUMBRANCE = "BAD_ENCUMBRANCE"
    PROOF_MISMATCH = "PROOF_MISMATCH"
    HISTORY_GAP = "HISTORY_GAP"

    def __str__(self) -> str:
        return self.value


# --- records ---------------------------------------------------------------


@dataclass(frozen=True)
class Genesis:
    denomination: int
    owner: bytes
    nonce: bytes
    issuer_key: bytes
    operator_id: str
    operator_key: bytes
    issuer_signature: bytes = b""

    @property
    def body(self) -> bytes:
        return encode_fields(
            "tokenlab/uso-genesis",
            self.denomination,
            self.owner,
            self.nonce,
            self.issuer_key,
            self.operator_id,
            self.operator_key,
        )

    @property
    def asset_id(self) -> bytes:
        return crypto.tagged_digest("tokenlab/uso-asset", self.body)

    @property
    def digest(self) -> bytes:
        return crypto.tagged_digest("tokenlab/uso-genesis-record", self.body, self.issuer_signature)

    def to_json(self) -> dict:
        return {
            "denomination": self.denomination,
            "owner": self.owner.hex(),
            "nonce": self.nonce.hex(),
            "issuer_key": self.issuer_key.hex(),
            "operator_id": self.operator_id,
            "operator_key": self.operator_key.hex(),
            "issuer_signature": self.issuer_signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Genesis":
        return cls(
            int(obj["denomination"]),
            bytes.fromhex(obj["owner"]),
            bytes.fromhex(obj["nonce"]),
            bytes.fromhex(obj["issuer_key"]),
            obj["operator_id"],
            bytes.fromhex(obj["operator_key"]),
            bytes.fromhex(obj["issuer_signature"]),
        )


@dataclass(frozen=True)
class StateUpdate:
    asset_id: bytes
    counter: int
    prev_digest: bytes
    new_owner: bytes
    signature: bytes = b""

    @property
    def message(self) -> bytes:
        return encode_fields("tokenlab/uso-update", self.asset_id, self.counter, self.prev_digest, self.new_owner)

    @property
    def digest(self) -> bytes:
        return crypto.tagged_digest("tokenlab/uso-update-record", self.message, self.signature)

    def to_json(self) -> dict:
        return {
            "asset_id": self.asset_id.hex(),
            "counter": self.counter,
            "prev_digest": self.prev_digest.hex(),
            "new_owner": self.new_owner.hex(),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "StateUpdate":
        return cls(
            bytes.fromhex(obj["asset_id"]),
            int(obj["counter"]),
            bytes.fromhex(obj["prev_digest"]),
            bytes.fromhex(obj["new_owner"]),
            bytes.fromhex(obj["signature"]),
        )


@dataclass(frozen=True)
class EpochCommitment:
    operator_id: str
    epoch: int
    root: bytes
    size: int  # leaf count, signed with the root so proofs cannot misstate it
    operator_key: bytes
    operator_signature: bytes = b""

    @property
    def message(self) -> bytes:
        return encode_fields("tokenlab/epoch-commitment", self.operator_id, self.epoch, self.root, self.size)

    def to_payload(self) -> dict:
        return {
            "operator_id": self.operator_id,
            "epoch": self.epoch,
            "root": self.root.hex(),
            "size": self.size,
            "operator_key": self.operator_key.hex(),
            "signature": self.operator_signature.hex(),
        }

    @classmethod
    def from_payload(cls, obj: Mapping) -> "EpochCommitment":
        return cls(
            obj["operator_id"],
            int(obj["epoch"]),
            bytes.fromhex(obj["root"]),
            int(obj["size"]),
            bytes.fromhex(obj["operator_key"]),
            bytes.fromhex(obj["signature"]),
        )


INCLUSION = "inclusion"
NON_INCLUSION = "non-inclusion"


@dataclass(frozen=True)
class ProofComponent:
    commitment: EpochCommitment
    ledger_index: Optional[int]
    kind: str
    leaf: Optional[LeafProof] = None
    left: Optional[LeafProof] = None
    right: Optional[LeafProof] = None

    @property
    def epoch(self) -> int:
        return self.commitment.epoch

    def to_json(self) -> dict:
        def lp(p: Optional[LeafProof]):
            return None if p is None else p.to_json()

        return {
            "commitment": self.commitment.to_payload(),
            "ledger_index": self.ledger_index,
            "kind": self.kind,
            "leaf": lp(self.leaf),
            "left": lp(self.left),
            "right": lp(self.right),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ProofComponent":
        def lp(raw):
            return None if raw is None else LeafProof.from_json(raw)

        return cls(
            EpochCommitment.from_payload(obj["commitment"]),
            obj["ledger_index"],
            obj["kind"],
            lp(obj.get("leaf")),
            lp(obj.get("left")),
            lp(obj.get("right")),
        )


@dataclass(frozen=True)
class ProofOfProvenance:
    components: Tuple[ProofComponent, ...] = ()

    @property
    def epochs(self) -> List[int]:
        return [c.epoch for c in self.components]

    @property
    def inclusion_epochs(self) -> List[int]:
        return [c.epoch for c in self.components if c.kind == INCLUSION]

    def to_json(self) -> list:
        return [c.to_json() for c in self.components]

    @classmethod
    def from_json(cls, obj: Sequence) -> "ProofOfProvenance":
        return cls(tuple(ProofComponent.from_json(c) for c in obj))


@dataclass(frozen=True)
class UsoAsset:
    asset_id: bytes
    genesis: Genesis
    updates: Tuple[StateUpdate, ...] = ()
    proof: ProofOfProvenance = ProofOfProvenance()

    @property
    def owner(self) -> bytes:
        return self.updates[-1].new_owner if self.updates else self.genesis.owner

    @property
    def head_digest(self) -> bytes:
        return self.updates[-1].digest if self.updates else self.genesis.digest

    @property
    def records(self) -> List[bytes]:
        return [self.genesis.digest] + [u.digest for u in self.updates]

    def to_json(self) -> dict:
        return {
            "asset_id": self.asset_id.hex(),
            "genesis": self.genesis.to_json(),
            "updates": [u.to_json() for u in self.updates],
            "proof": self.proof.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "UsoAsset":
        return cls(
            bytes.fromhex(obj["asset_id"]),
            Genesis.from_json(obj["genesis"]),
            tuple(StateUpdate.from_json(u) for u in obj["updates"]),
            ProofOfProvenance.from_json(obj["proof"]),
        )


# --- issuer ----------------------------------------------------------------


@dataclass(frozen=True)
class TransparentIssuance:
    """Issuer's view of a transparent issuance: the whole genesis record."""

    body: bytes
    signature: bytes
    asset_id: bytes


class UsoIssuer:
    def __init__(self, keypair: KeyPair, blind_keys: Optional[Mapping[int, KeyPair]] = None):
        self.keypair = keypair
        self.blind_keys = dict(blind_keys or {})
        self.transcript: List[Union[TransparentIssuance, BlindSignatureTranscript]] = []

    @classmethod
    def generate(
        cls,
        rng: random.Random,
        denominations: Sequence[int] = DEFAULT_DENOMINATIONS,
        bits: int = crypto.DEFAULT_RSA_BITS,
    ) -> "UsoIssuer":
        keypair = crypto.generate_keypair(rng)
        return cls(keypair, {d: crypto.generate_blind_keypair(rng, bits) for d in sorted(set(denominations))})

    def trusted_keys(self) -> Dict[bytes, Optional[int]]:
        """Issuer keys a verifier should accept, mapped to the denomination they vouch for."""
        keys: Dict[bytes, Optional[int]] = {self.keypair.public: None}
        keys.update({k.public: d for d, k in self.blind_keys.items()})
        return keys


# --- operator --------------------------------------------------------------


@dataclass
class ClosedEpoch:
    tree: SortedMerkleTree
    commitment: EpochCommitment
    ledger_index: Optional[int]


class Operator:
    """Per-operator single-writer state: the open epoch and every closed one."""

    def __init__(
        self,
        operator_id: str,
        keypair: KeyPair,
        *,
        mitigation: Union[Mitigation, str] = Mitigation.DLT,
        network: Optional[Network] = None,
    ):
        self.operator_id = operator_id
        self.keypair = keypair
        self.mitigation = Mitigation(mitigation)
        if self.mitigation is Mitigation.DLT and network is None:
            raise ValueError("DLT mitigation needs a ledger network")
        self.network = network if self.mitigation is Mitigation.DLT else None
        self.epoch = 0
        self.pending: Dict[bytes, bytes] = {}
        self.received: List[bytes] = []
        self.closed: List[ClosedEpoch] = []
        self.asset_epochs: Dict[bytes, List[int]] = {}
        self.alternates: Dict[int, ClosedEpoch] = {}

    def submit(self, asset_id: bytes, record_digest: bytes) -> int:
        """Accept one transaction hash into the open epoch; returns the epoch."""
        if len(asset_id) != crypto.DIGEST_SIZE or len(record_digest) != crypto.DIGEST_SIZE:
            raise Rejected(Rejection.INVALID, "submissions are pairs of 32-byte digests")
        self.received.append(bytes(asset_id) + bytes(record_digest))
        if asset_id in self.pending:
            raise Rejected(
                Rejection.DUPLICATE_IN_EPOCH,
                f"asset {asset_id.hex()[:16]} already updated in epoch {self.epoch}",
            )
        self.pending[bytes(asset_id)] = bytes(record_digest)
        return self.epoch

    def _commitment(self, epoch: int, tree: SortedMerkleTree) -> EpochCommitment:
        c = EpochCommitment(self.operator_id, epoch, tree.root, len(tree), self.keypair.public)
        return replace(c, operator_signature=crypto.sign(self.keypair.secret, c.message))

    def publish(self, commitment: EpochCommitment) -> LedgerEntry:
        if self.network is None:
            raise Rejected(Rejection.INVALID, "self-attested operators have no ledger")
        return self.network.submit_entry(EntryKind.EPOCH_COMMITMENT, commitment.to_payload())

    def close_epoch(self) -> EpochCommitment:
        tree = SortedMerkleTree(self.pending)
        commitment = self._commitment(self.epoch, tree)
        ledger_index = None
        if self.mitigation is Mitigation.DLT:
            ledger_index = self.publish(commitment).index
        self.closed.append(ClosedEpoch(tree, commitment, ledger_index))
        for asset_id in self.pending:
            self.asset_epochs.setdefault(asset_id, []).append(self.epoch)
        log.debug("operator %s closed epoch %d with %d leaves", self.operator_id, self.epoch, len(tree))
        self.epoch += 1
        self.pending = {}
        return commitment

    @property
    def last_closed(self) -> int:
        return self.epoch - 1

    def prove_provenance(
        self,
        asset_id: bytes,
        from_epoch: int,
        to_epoch: int,
        *,
        view: Optional[Mapping[int, ClosedEpoch]] = None,
    ) -> ProofOfProvenance:
        """Inclusion or non-inclusion evidence for every epoch in the range.

        ``view`` substitutes alternate epochs; only an equivocating operator
        passes one.
        """
        if to_epoch >= self.epoch:
            raise Rejected(Rejection.EPOCH_OPEN, f"epoch {to_epoch} is not closed")
        if not 0 <= from_epoch <= to_epoch:
            raise Rejected(Rejection.INVALID, "bad epoch range")
        view = view or {}
        components = []
        for epoch in range(from_epoch, to_epoch + 1):
            closed = view.get(epoch, self.closed[epoch])
            evidence = closed.tree.prove(asset_id)
            if isinstance(evidence, LeafProof):
                comp = ProofComponent(closed.commitment, closed.ledger_index, INCLUSION, leaf=evidence)
            else:
                comp = ProofComponent(
                    closed.commitment, closed.ledger_index, NON_INCLUSION, left=evidence.left, right=evidence.right
                )
            components.append(comp)
        return ProofOfProvenance(tuple(components))

    def equivocate(self, epoch: int, alternate_leaves: Mapping[bytes, bytes]) -> EpochCommitment:
        """Sign a second root for an already closed epoch without publishing it."""
        if not 0 <= epoch < self.epoch:
            raise Rejected(Rejection.EPOCH_OPEN, f"epoch {epoch} is not closed")
        tree = SortedMerkleTree(alternate_leaves)
        commitment = self._commitment(epoch, tree)
        self.alternates[epoch] = ClosedEpoch(tree, commitment, self.closed[epoch].ledger_index)
        return commitment

    def leaves(self, epoch: int) -> Dict[bytes, bytes]:
        return dict(self.closed[epoch].tree.items)


# --- protocol operations ---------------------------------------------------


def issue_asset(
    operator: Operator,
    issuer: UsoIssuer,
    denomination: int,
    owner_key: bytes,
    privacy_mode: Union[Privacy, str],
    rng: random.Random,
) -> UsoAsset:
    privacy = Privacy(privacy_mode)
    if not isinstance(denomination, int) or denomination <= 0:
        raise Rejected(Rejection.BAD_DENOMINATION, f"denomination {denomination!r}")
    if privacy is Privacy.BLIND and denomination not in issuer.blind_keys:
        raise Rejected(
            Rejection.BAD_DENOMINATION, f"{denomination} not in {sorted(issuer.blind_keys)}"
        )
    issuer_key = issuer.keypair.public if privacy is Privacy.TRANSPARENT else issuer.blind_keys[denomination].public
    genesis = Genesis(
        denomination,
        owner_key,
        rng.randbytes(NONCE_SIZE),
        issuer_key,
        operator.operator_id,
        operator.keypair.public,
    )
    if privacy is Privacy.TRANSPARENT:
        signature = crypto.sign(issuer.keypair.secret, genesis.body)
        issuer.transcript.append(TransparentIssuance(genesis.body, signature, genesis.asset_id))
    else:
        # the issuer sees only the blinded genesis body
        blinded, state = crypto.blind(genesis.body, issuer_key, rng)
        blind_sig = crypto.blind_sign(issuer.blind_keys[denomination].secret, blinded)
        issuer.transcript.append(BlindSignatureTranscript(blinded, blind_sig, issuer_key))
        signature = crypto.unblind(blind_sig, state)
    genesis = replace(genesis, issuer_signature=signature)
    operator.submit(genesis.asset_id, genesis.digest)
    return UsoAsset(genesis.asset_id, genesis)


@dataclass(frozen=True)
class TransferReceipt:
    asset: UsoAsset
    update: StateUpdate
    epoch: int


def transfer(asset: UsoAsset, sender_secret: bytes, recipient_key: bytes, operator: Operator) -> TransferReceipt:
    update = StateUpdate(asset.asset_id, len(asset.updates) + 1, asset.head_digest, recipient_key)
    update = replace(update, signature=crypto.sign(sender_secret, update.message))
    epoch = operator.submit(asset.asset_id, update.digest)
    return TransferReceipt(replace(asset, updates=asset.updates + (update,)), update, epoch)


def refresh_proof(asset: UsoAsset, operator: Operator, to_epoch: Optional[int] = None) -> UsoAsset:
    """Attach a proof covering the asset's genesis epoch through ``to_epoch``."""
    epochs = operator.asset_epochs.get(asset.asset_id)
    if not epochs:
        raise Rejected(Rejection.UNKNOWN_TOKEN, "operator has no closed record of this asset")
    to_epoch = operator.last_closed if to_epoch is None else to_epoch
    return replace(asset, proof=operator.prove_provenance(asset.asset_id, epochs[0], to_epoch))


def _certificate_ok(entry: LedgerEntry, network: Network) -> bool:
    keys = network.peer_keys
    signers = set()
    for peer_id, sig in entry.quorum_cert:
        if peer_id in signers or peer_id not in keys or not crypto.verify(keys[peer_id], entry.digest, sig):
            return False
        signers.add(peer_id)
    return len(signers) >= network.threshold


def _check_proof(asset: UsoAsset, network: Optional[Network]) -> bool:
    genesis = asset.genesis
    records = asset.records
    matched = 0
    components = asset.proof.components
    if not components:
        return False
    for comp in components:
        c = comp.commitment
        if c.operator_id != genesis.operator_id or c.operator_key != genesis.operator_key:
            return False
        if not crypto.verify(genesis.operator_key, c.message, c.operator_signature):
            return False
        if network is not None:
            idx = comp.ledger_index
            if not isinstance(idx, int) or isinstance(idx, bool) or not 0 <= idx < len(network.entries):
                return False
            entry = network.entry(idx)
            if entry.kind is not EntryKind.EPOCH_COMMITMENT or entry.payload != c.to_payload():
                return False
            if not _certificate_ok(entry, network):
                return False
        if comp.kind == INCLUSION:
            leaf = comp.leaf
            if leaf is None or comp.left is not None or comp.right is not None:
                return False
            if leaf.key != asset.asset_id or leaf.tree_size != c.size or not leaf.computes(c.root):
                return False
            if matched >= len(records) or leaf.value != records[matched]:
                return False
            matched += 1
        elif comp.kind == NON_INCLUSION:
            if comp.leaf is not None:
                return False
            if any(p is not None and p.tree_size != c.size for p in (comp.left, comp.right)):
                return False
            if not verify_absence(asset.asset_id, Absence(comp.left, comp.right), c.root):
                return False
        else:
            return False
    return matched == len(records)


def verify_asset(
    asset: UsoAsset,
    network: Optional[Network] = None,
    *,
    issuers: Optional[Mapping[bytes, Optional[int]]] = None,
) -> Verdict:
    """Check an asset end to end; returns VALID or the first failure.

    With ``network`` the proof must be anchored in certified ledger entries
    and reach the operator's latest committed epoch; without it the
    operator's own signature on each root is all there is.  ``issuers``
    restricts acceptable issuer keys (value None: any denomination).
    """
    g = asset.genesis
    if issuers is not None:
        if g.issuer_key not in issuers or issuers[g.issuer_key] not in (None, g.denomination):
            return Verdict.BAD_GENESIS
    # a field that cannot be encoded fails the stage that encodes it
    try:
        if g.denomination <= 0 or not crypto.verify(g.issuer_key, g.body, g.issuer_signature):
            return Verdict.BAD_GENESIS
    except (TypeError, ValueError):
        return Verdict.BAD_GENESIS

    if asset.asset_id != g.asset_id:
        return Verdict.BROKEN_CHAIN
    try:
        prev = g.digest
        for u in asset.updates:
            if u.asset_id != asset.asset_id or u.prev_digest != prev:
                return Verdict.BROKEN_CHAIN
            prev = u.digest
    except (TypeError, ValueError):
        return Verdict.BROKEN_CHAIN

    # proof before encumbrance: a record altered after the proof was issued
    # no longer matches its committed leaf
    try:
        if not _check_proof(asset, network):
            return Verdict.PROOF_MISMATCH
    except (TypeError, ValueError):
        return Verdict.PROOF_MISMATCH

    owner = g.owner
    for u in asset.updates:
        if not crypto.verify(owner, u.message, u.signature):
            return Verdict.BAD_ENCUMBRANCE
        owner = u.new_owner

    epochs = asset.proof.epochs
    if epochs != list(range(epochs[0], epochs[0] + len(epochs))):
        return Verdict.HISTORY_GAP
    if any(u.counter != i + 1 for i, u in enumerate(asset.updates)):
        return Verdict.HISTORY_GAP
    if network is not None and network.commitment_index(g.operator_id, epochs[-1] + 1) is not None:
        return Verdict.HISTORY_GAP
    return Verdict.VALID
