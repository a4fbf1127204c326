import random
from dataclasses import replace

import pytest

from tokenlab import crypto, uso
from tokenlab.dlt import EntryKind, Network
from tokenlab.errors import Rejected, Rejection
from tokenlab.merkle import EMPTY_ROOT
from tokenlab.uso import Operator, Privacy, Verdict
from test_merkle import naive_mth


class World:
    def __init__(self, issuer, mitigation="dlt", seed=0, peers=4):
        self.rng = random.Random(seed)
        self.network = Network(peers, self.rng)
        self.operator = Operator("op-1", crypto.generate_keypair(self.rng), mitigation=mitigation, network=self.network)
        self.issuer = issuer
        self.keys = {n: crypto.generate_keypair(self.rng) for n in ("alice", "bob", "carol", "dave")}

    def issue(self, owner="alice", denomination=10, privacy=Privacy.TRANSPARENT):
        return uso.issue_asset(self.operator, self.issuer, denomination, self.keys[owner].public, privacy, self.rng)

    def send(self, asset, frm, to):
        return uso.transfer(asset, self.keys[frm].secret, self.keys[to].public, self.operator).asset

    def verify(self, asset, view=None):
        epochs = self.operator.asset_epochs[asset.asset_id]
        proof = self.operator.prove_provenance(asset.asset_id, epochs[0], self.operator.last_closed, view=view)
        net = self.network if self.operator.mitigation is uso.Mitigation.DLT else None
        return uso.verify_asset(replace(asset, proof=proof), net, issuers=self.issuer.trusted_keys())


@pytest.fixture
def world(uso_issuer):
    return World(uso_issuer)


def test_transparent_genesis_signature(world):
    a = world.issue()
    g = a.genesis
    assert crypto.verify(world.issuer.keypair.public, g.body, g.issuer_signature)
    assert a.asset_id == g.asset_id


def test_blind_issue_transcript_excludes_asset_ids(uso_issuer):
    issuer = uso.UsoIssuer(uso_issuer.keypair, uso_issuer.blind_keys)
    w = World(issuer)
    ids = [w.issue(privacy=Privacy.BLIND, denomination=5).asset_id for _ in range(50)]
    seen = b"".join(t.blinded_message + t.blind_signature + t.issuer_key for t in issuer.transcript)
    assert len(issuer.transcript) == 50 and sum(i in seen for i in ids) == 0


def test_blind_bad_denomination(world):
    with pytest.raises(Rejected) as exc:
        world.issue(privacy=Privacy.BLIND, denomination=7)
    assert exc.value.code is Rejection.BAD_DENOMINATION


@pytest.mark.parametrize("privacy", list(Privacy))
def test_issue_then_verify_genesis_only(world, privacy):
    a = world.issue(privacy=privacy)
    world.operator.close_epoch()
    epochs = world.operator.asset_epochs[a.asset_id]
    proof = world.operator.prove_provenance(a.asset_id, epochs[0], world.operator.last_closed)
    assert len(proof.components) == 1
    assert world.verify(a) is Verdict.VALID


def test_single_hop(world):
    a = world.issue()
    world.operator.close_epoch()
    b = world.send(a, "alice", "bob")
    world.operator.close_epoch()
    assert b.updates[-1].counter == 1 and world.verify(b) is Verdict.VALID


def test_duplicate_update_in_epoch(world):
    a = world.issue()
    world.operator.close_epoch()
    world.send(a, "alice", "bob")
    with pytest.raises(Rejected) as exc:
        world.send(a, "alice", "carol")
    assert exc.value.code is Rejection.DUPLICATE_IN_EPOCH


def test_operator_receives_two_digests_per_transfer(world):
    a = world.issue()
    world.operator.close_epoch()
    before = len(world.operator.received)
    b = world.send(a, "alice", "bob")
    chunk = world.operator.received[before]
    assert len(world.operator.received) == before + 1
    assert chunk == a.asset_id + b.updates[-1].digest


def test_empty_epoch_published(world):
    c = world.operator.close_epoch()
    assert c.root == EMPTY_ROOT and c.size == 0
    assert world.network.entries[-1].kind is EntryKind.EPOCH_COMMITMENT


def test_many_transactions_one_entry(world):
    for _ in range(200):
        world.issue()
    world.operator.close_epoch()
    assert len(world.network.entries) == 1


def test_root_matches_naive_oracle(world):
    for _ in range(13):
        world.issue()
    c = world.operator.close_epoch()
    leaves = world.operator.leaves(0)
    assert c.root == naive_mth([k + v for k, v in sorted(leaves.items())])


def _asset_updated_in(world, epochs, last):
    a = world.issue()
    other = world.issue("bob")
    owners = ["alice", "bob", "carol", "dave", "alice"]
    hop = 0
    for e in range(last + 1):
        if e in epochs and e != 0:
            a = world.send(a, owners[hop], owners[hop + 1])
            hop += 1
        if e == 2:
            other = world.send(other, "bob", "carol")
        world.operator.close_epoch()
    return a


def test_proof_counts_inclusion_and_non_inclusion(world):
    a = _asset_updated_in(world, {0, 3}, 4)
    proof = world.operator.prove_provenance(a.asset_id, 0, 4)
    assert proof.inclusion_epochs == [0, 3]
    assert len(proof.components) - len(proof.inclusion_epochs) == 3


def test_proof_roots_match_certified_entries(world):
    a = _asset_updated_in(world, {0, 1, 3}, 4)
    proof = world.operator.prove_provenance(a.asset_id, 0, 4)
    for comp in proof.components:
        entry = world.network.entries[comp.ledger_index]
        assert entry.payload["root"] == comp.commitment.root.hex()


def test_non_inclusion_claim_for_present_epoch_fails(world):
    a = _asset_updated_in(world, {0, 1}, 2)
    proof = world.operator.prove_provenance(a.asset_id, 0, 2)
    comp = proof.components[1]
    tree = world.operator.closed[1].tree
    i = comp.leaf.index
    left = tree.leaf_proof(i - 1) if i > 0 else None
    right = tree.leaf_proof(i + 1) if i + 1 < len(tree) else None
    fake = replace(comp, kind=uso.NON_INCLUSION, leaf=None, left=left, right=right)
    comps = list(proof.components)
    comps[1] = fake
    # the holder hides the epoch-1 transfer and claims a genesis-only history
    bad = replace(a, updates=a.updates[:0], proof=uso.ProofOfProvenance(tuple(comps)))
    assert uso.verify_asset(bad, world.network) is not Verdict.VALID


def test_tamper_after_proof(world):
    a = _asset_updated_in(world, {0, 1, 2, 3}, 3)
    a = uso.refresh_proof(a, world.operator)
    assert uso.verify_asset(a, world.network) is Verdict.VALID
    for i in range(len(a.updates)):
        ups = list(a.updates)
        ups[i] = replace(ups[i], new_owner=crypto.generate_keypair(world.rng).public)
        v = uso.verify_asset(replace(a, updates=tuple(ups)), world.network)
        assert v in (Verdict.BROKEN_CHAIN, Verdict.PROOF_MISMATCH)


def test_unencodable_fields_are_rejected_not_raised(world):
    a = uso.refresh_proof(_asset_updated_in(world, {0, 1}, 1), world.operator)
    assert uso.verify_asset(replace(a, genesis=replace(a.genesis, denomination=-1)), world.network) is Verdict.BAD_GENESIS
    ups = (replace(a.updates[0], counter=-1),) + a.updates[1:]
    assert uso.verify_asset(replace(a, updates=ups), world.network) is Verdict.BROKEN_CHAIN
    comps = list(a.proof.components)
    comps[0] = replace(comps[0], commitment=replace(comps[0].commitment, epoch=-1))
    assert uso.verify_asset(replace(a, proof=uso.ProofOfProvenance(tuple(comps))), world.network) is Verdict.PROOF_MISMATCH


def test_wrong_sender_key_fails_encumbrance(world):
    a = world.issue()
    world.operator.close_epoch()
    stolen = uso.transfer(a, world.keys["carol"].secret, world.keys["carol"].public, world.operator).asset
    world.operator.close_epoch()
    assert world.verify(stolen) is Verdict.BAD_ENCUMBRANCE


def test_untrusted_issuer_is_bad_genesis(world):
    a = world.issue()
    world.operator.close_epoch()
    a = uso.refresh_proof(a, world.operator)
    assert uso.verify_asset(a, world.network, issuers={b"\x00" * 32: None}) is Verdict.BAD_GENESIS


def test_stale_proof_is_history_gap(world):
    a = world.issue()
    world.operator.close_epoch()
    a = uso.refresh_proof(a, world.operator)
    world.operator.close_epoch()
    assert uso.verify_asset(a, world.network) is Verdict.HISTORY_GAP


def test_open_epoch_in_range(world):
    a = world.issue()
    with pytest.raises(Rejected) as exc:
        world.operator.prove_provenance(a.asset_id, 0, 0)
    assert exc.value.code is Rejection.EPOCH_OPEN


def _equivocation(world):
    a = world.issue()
    world.operator.close_epoch()
    bob_copy = world.send(a, "alice", "bob")
    world.operator.close_epoch()
    u = uso.StateUpdate(a.asset_id, 1, a.head_digest, world.keys["carol"].public)
    u = replace(u, signature=crypto.sign(world.keys["alice"].secret, u.message))
    leaves = world.operator.leaves(1)
    leaves[a.asset_id] = u.digest
    alt = world.operator.equivocate(1, leaves)
    carol_copy = replace(a, updates=(u,))
    return bob_copy, carol_copy, alt


def test_equivocation_with_dlt(world):
    bob, carol, alt = _equivocation(world)
    with pytest.raises(Rejected) as exc:
        world.operator.publish(alt)
    assert exc.value.code is Rejection.DUPLICATE_EPOCH
    assert world.verify(bob) is Verdict.VALID
    assert world.verify(carol, view=world.operator.alternates) is Verdict.PROOF_MISMATCH


def test_equivocation_self_attested(uso_issuer):
    w = World(uso_issuer, mitigation="self-attested")
    bob, carol, _ = _equivocation(w)
    assert w.network.entries == []
    assert w.verify(bob) is Verdict.VALID
    assert w.verify(carol, view=w.operator.alternates) is Verdict.VALID


def test_asset_json_round_trip(world):
    a = world.issue()
    world.operator.close_epoch()
    a = uso.refresh_proof(world.send(a, "alice", "bob"), world.operator, 0)
    assert uso.UsoAsset.from_json(a.to_json()) == a


def test_operator_stream_is_oblivious(uso_issuer):
    for seed in range(100):
        w = World(uso_issuer, seed=seed, peers=1)
        r = random.Random(seed)
        holders = list(w.keys)
        assets = [(w.issue(r.choice(holders), r.choice([1, 5, 10])), None) for _ in range(r.randint(1, 4))]
        current = [a for a, _ in assets]
        for _ in range(r.randint(0, 3)):
            w.operator.close_epoch()
            for i, a in enumerate(current):
                if r.random() < 0.6:
                    owner = next(n for n, k in w.keys.items() if k.public == a.owner)
                    current[i] = w.send(a, owner, r.choice(holders))
        stream = b"".join(w.operator.received)
        assert all(len(c) == 64 for c in w.operator.received)
        for a in current:
            assert a.genesis.body not in stream and a.genesis.owner not in stream
            for u in a.updates:
                assert u.new_owner not in stream and u.signature not in stream
